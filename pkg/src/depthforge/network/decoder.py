"""Paired depth/segmentation decoders with skip connections and fusion units.

Each of the five stages runs, per stream: 3x3 conv + ELU, cross propagation,
(affinity propagation at the coarsest stage only, on the post-CPU features),
nearest x2 upsample, skip concatenation from the matching encoder scale, then
a second 3x3 conv + ELU. Sigmoid disparity heads hang off the four finest
stages, giving maps at 1/1, 1/2, 1/4 and 1/8 resolution; the segmentation
logit head runs at full resolution.
"""

from __future__ import annotations

from ..autodiff import Tensor, ops
from ..errors import ConfigError
from .fusion import AffinityPropagationUnit, CrossPropagationUnit
from .layers import Conv2d, OWNER_DEPTH, OWNER_SEG


class DecoderPair:
    def __init__(self, seed: int, encoder_channels: tuple[int, ...],
                 decoder_channels: tuple[int, ...] = (8, 12, 16, 20, 24),
                 n_seg_classes: int = 19, fusion: bool = True,
                 detach_cross: bool = True):
        if len(decoder_channels) != 5 or len(encoder_channels) != 5:
            raise ConfigError("decoder and encoder need 5 channel widths each")
        self.n_seg_classes = n_seg_classes
        self.fusion = fusion
        ec, dc = list(encoder_channels), list(decoder_channels)

        self.conv0 = {"depth": [], "seg": []}
        self.conv1 = {"depth": [], "seg": []}
        for stream, owner in (("depth", OWNER_DEPTH), ("seg", OWNER_SEG)):
            for i in range(5):
                c_in = ec[4] if i == 4 else dc[i + 1]
                skip = ec[i - 1] if i > 0 else 0
                self.conv0[stream].append(
                    Conv2d(seed, f"decoder.{stream}.stage{i}.conv0", owner, c_in, dc[i], 3))
                self.conv1[stream].append(
                    Conv2d(seed, f"decoder.{stream}.stage{i}.conv1", owner, dc[i] + skip, dc[i], 3))

        self.cpus = ([CrossPropagationUnit(seed, f"decoder.cpu{i}", dc[i], detach_cross)
                      for i in range(5)] if fusion else None)
        self.apu = (AffinityPropagationUnit(seed, "decoder.apu", dc[4], detach_cross)
                    if fusion else None)
        self.disp_heads = [Conv2d(seed, f"decoder.disp{i}", OWNER_DEPTH, dc[i], 1, 3)
                           for i in range(4)]
        self.seg_head = Conv2d(seed, "decoder.seg_head", OWNER_SEG, dc[0], n_seg_classes, 3)

    def __call__(self, feats_depth: list[Tensor], feats_seg: list[Tensor],
                 training: bool) -> dict:
        if len(feats_depth) != 5 or len(feats_seg) != 5:
            raise ConfigError(f"decoder expects 5 encoder scales, got {len(feats_depth)}")
        d, s = feats_depth[4], feats_seg[4]
        disparities = [None] * 4
        for i in range(4, -1, -1):
            d = ops.elu(self.conv0["depth"][i](d))
            s = ops.elu(self.conv0["seg"][i](s))
            if self.cpus is not None:
                d, s = self.cpus[i](d, s)
            if i == 4 and self.apu is not None:
                d = self.apu(d, s, training)
            d = ops.nearest_upsample(d)
            s = ops.nearest_upsample(s)
            if i > 0:
                d = ops.concat([d, feats_depth[i - 1]], axis=1)
                s = ops.concat([s, feats_seg[i - 1]], axis=1)
            d = ops.elu(self.conv1["depth"][i](d))
            s = ops.elu(self.conv1["seg"][i](s))
            if i < 4:
                disparities[i] = ops.sigmoid(self.disp_heads[i](d))
        return {"disparities": disparities, "seg_logits": self.seg_head(s)}

    def _parts(self):
        parts = []
        for stream in ("depth", "seg"):
            parts.extend(self.conv0[stream])
            parts.extend(self.conv1[stream])
        if self.cpus is not None:
            parts.extend(self.cpus)
        if self.apu is not None:
            parts.append(self.apu)
        parts.extend(self.disp_heads)
        parts.append(self.seg_head)
        return parts

    def named_params(self):
        return [p for part in self._parts() for p in part.named_params()]

    def named_state(self):
        return [st for part in self._parts() for st in part.named_state()]
