"""Shared encoder with per-task SE gates, residual adapters and batch norms.

Five feature scales at 1/2 .. 1/32 of the input. Downsampling happens in
strided 4x4 transition convs between stages so the conv output-extent
arithmetic stays exact on even inputs; the residual blocks themselves are
stride-1 with identity shortcuts and compute

    out = x + SE_task(residual(x)) + RA_task(x)

where the residual path is conv-bn-relu-conv-bn with task-owned norms, the SE
gate and the zero-initialized 1x1 adapter are task-owned, and all convolution
weights are shared between tasks. ``fusion=False`` drops the adapters.

Input height and width must be divisible by 32.
"""

from __future__ import annotations

from ..autodiff import Tensor, ops
from .layers import Conv2d, TaskBatchNorm, TaskResidualAdapter, TaskSE, OWNER_SHARED


class ResidualBlock:
    """Stride-1 SE-ResNet block with a task-specific residual adapter."""

    def __init__(self, seed: int, path: str, channels: int, se_reduction: int, fusion: bool):
        self.conv1 = Conv2d(seed, f"{path}.conv1", OWNER_SHARED, channels, channels, 3)
        self.bn1 = TaskBatchNorm(f"{path}.bn1", channels)
        self.conv2 = Conv2d(seed, f"{path}.conv2", OWNER_SHARED, channels, channels, 3)
        self.bn2 = TaskBatchNorm(f"{path}.bn2", channels)
        self.se = TaskSE(seed, f"{path}.se", channels, se_reduction)
        self.adapter = (TaskResidualAdapter(seed, f"{path}.ra", channels, channels)
                        if fusion else None)

    def __call__(self, x: Tensor, task: str, training: bool) -> Tensor:
        h = ops.relu(self.bn1(self.conv1(x), task, training))
        h = self.bn2(self.conv2(h), task, training)
        h = self.se(h, task)
        out = ops.add(x, h)
        if self.adapter is not None:
            out = ops.add(out, self.adapter(x, task))
        return out

    def _parts(self):
        parts = [self.conv1, self.bn1, self.conv2, self.bn2, self.se]
        if self.adapter is not None:
            parts.append(self.adapter)
        return parts

    def named_params(self):
        return [p for part in self._parts() for p in part.named_params()]

    def named_state(self):
        return [s for part in self._parts() for s in part.named_state()]


class _Transition:
    """4x4 stride-2 conv + task norm + relu; halves the spatial extent exactly."""

    def __init__(self, seed: int, path: str, c_in: int, c_out: int):
        self.conv = Conv2d(seed, f"{path}.conv", OWNER_SHARED, c_in, c_out, 4, stride=2, padding=1)
        self.bn = TaskBatchNorm(f"{path}.bn", c_out)

    def __call__(self, x: Tensor, task: str, training: bool) -> Tensor:
        return ops.relu(self.bn(self.conv(x), task, training))

    def named_params(self):
        return self.conv.named_params() + self.bn.named_params()

    def named_state(self):
        return self.bn.named_state()


class SharedEncoder:
    def __init__(self, seed: int, channels: tuple[int, ...] = (8, 16, 24, 28, 32),
                 se_reduction: int = 4, fusion: bool = True, in_channels: int = 3,
                 blocks_per_stage: int = 2):
        if len(channels) != 5:
            raise ValueError(f"encoder needs 5 channel widths, got {channels}")
        self.channels = tuple(channels)
        self.stem = _Transition(seed, "encoder.stem", in_channels, channels[0])
        self.stages = []
        for i in range(1, 5):
            stage = [_Transition(seed, f"encoder.stage{i}.down", channels[i - 1], channels[i])]
            stage += [ResidualBlock(seed, f"encoder.stage{i}.block{b}", channels[i],
                                    se_reduction, fusion)
                      for b in range(blocks_per_stage)]
            self.stages.append(stage)

    def __call__(self, x: Tensor, task: str, training: bool) -> list[Tensor]:
        """Return features at 1/2, 1/4, 1/8, 1/16, 1/32 resolution."""
        h = self.stem(x, task, training)
        feats = [h]
        for stage in self.stages:
            down = stage[0]
            h = down(h, task, training)
            for block in stage[1:]:
                h = block(h, task, training)
            feats.append(h)
        return feats

    def _parts(self):
        parts = [self.stem]
        for stage in self.stages:
            parts.extend(stage)
        return parts

    def named_params(self):
        return [p for part in self._parts() for p in part.named_params()]

    def named_state(self):
        return [s for part in self._parts() for s in part.named_state()]
