"""The full two-task network: shared encoder, paired decoders, pose head."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor
from ..errors import CheckpointError
from ..geometry import BatchedPose
from .decoder import DecoderPair
from .encoder import SharedEncoder
from .pose import PoseNet

TOY_ENCODER_CHANNELS = (8, 16, 24, 28, 32)
TOY_DECODER_CHANNELS = (8, 12, 16, 20, 24)


class MultiTaskDepthNet:
    """Depth + segmentation network trained jointly from one shared encoder.

    ``fusion=False`` builds the fusion-free twin: identical shared and
    task-specific weights (initialization is keyed by parameter path) but no
    residual adapters, no cross propagation and no affinity propagation.
    """

    def __init__(self, seed: int = 0,
                 encoder_channels: tuple[int, ...] = TOY_ENCODER_CHANNELS,
                 decoder_channels: tuple[int, ...] = TOY_DECODER_CHANNELS,
                 n_seg_classes: int = 19, se_reduction: int = 4,
                 fusion: bool = True, detach_cross: bool = True,
                 with_pose: bool = True):
        self.seed = int(seed)
        self.n_seg_classes = n_seg_classes
        self.config = {
            "seed": self.seed,
            "encoder_channels": list(encoder_channels),
            "decoder_channels": list(decoder_channels),
            "n_seg_classes": n_seg_classes,
            "se_reduction": se_reduction,
            "fusion": fusion,
            "detach_cross": detach_cross,
            "with_pose": with_pose,
        }
        self.encoder = SharedEncoder(seed, encoder_channels, se_reduction, fusion)
        self.decoders = DecoderPair(seed, encoder_channels, decoder_channels,
                                    n_seg_classes, fusion, detach_cross)
        self.pose_net = PoseNet(seed) if with_pose else None

    # forward ---------------------------------------------------------------

    def forward(self, images: Tensor, training: bool) -> dict:
        """Run both task streams; returns multi-scale sigmoids and seg logits."""
        feats_depth = self.encoder(images, "depth", training)
        feats_seg = self.encoder(images, "seg", training)
        return self.decoders(feats_depth, feats_seg, training)

    def forward_depth(self, images: Tensor, training: bool = False) -> Tensor:
        """Full-resolution disparity activation (N, 1, H, W) in (0, 1)."""
        return self.forward(images, training)["disparities"][0]

    def pose(self, ref: Tensor, src: Tensor) -> BatchedPose:
        if self.pose_net is None:
            raise RuntimeError("model was built without a pose network")
        return self.pose_net(ref, src)

    # parameters and state ----------------------------------------------------

    def _parts(self):
        parts = [self.encoder, self.decoders]
        if self.pose_net is not None:
            parts.append(self.pose_net)
        return parts

    def named_parameters(self) -> list[tuple[str, Tensor, str]]:
        return [p for part in self._parts() for p in part.named_params()]

    def parameters(self, owner: str | None = None) -> list[Tensor]:
        return [t for _, t, o in self.named_parameters() if owner is None or o == owner]

    def parameter_count(self) -> int:
        return sum(t.size for t in self.parameters())

    def named_state(self) -> list[tuple[str, np.ndarray]]:
        return [s for part in self._parts() for s in part.named_state()]

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"param/{name}": t.data for name, t, _ in self.named_parameters()}
        out.update({f"state/{name}": arr for name, arr in self.named_state()})
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        own = self.state_arrays()
        missing = set(own) - set(arrays)
        if missing:
            raise CheckpointError(f"checkpoint missing {len(missing)} entries, e.g. {sorted(missing)[:3]}")
        for name, target in own.items():
            src = arrays[name]
            if src.shape != target.shape:
                raise CheckpointError(f"{name}: checkpoint shape {src.shape} != model shape {target.shape}")
            target[...] = src
