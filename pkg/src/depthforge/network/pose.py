"""Relative-pose regressor over a channel-concatenated frame pair.

A small strided conv stack pools to a 6-vector (axis-angle rotation and
translation), scaled by 0.01 for optimization stability, then exponentiated
to a rigid transform. Pose parameters belong to the depth task: only the
photometric objective ever reaches them.
"""

from __future__ import annotations

from ..autodiff import Tensor, ops
from ..geometry import BatchedPose, axis_angle_rotation
from .layers import Conv2d, OWNER_DEPTH

POSE_SCALE = 0.01


class PoseNet:
    def __init__(self, seed: int, widths: tuple[int, int, int] = (12, 24, 24)):
        w0, w1, w2 = widths
        self.convs = [
            Conv2d(seed, "pose.conv0", OWNER_DEPTH, 6, w0, 4, stride=2, padding=1),
            Conv2d(seed, "pose.conv1", OWNER_DEPTH, w0, w1, 4, stride=2, padding=1),
            Conv2d(seed, "pose.conv2", OWNER_DEPTH, w1, w2, 4, stride=2, padding=1),
        ]
        self.head = Conv2d(seed, "pose.head", OWNER_DEPTH, w2, 6, 1, padding=0)

    def __call__(self, ref: Tensor, src: Tensor) -> BatchedPose:
        x = ops.concat([ref, src], axis=1)
        for conv in self.convs:
            x = ops.relu(conv(x))
        vec = ops.mul(POSE_SCALE, ops.global_avg_pool(self.head(x)))
        rot = axis_angle_rotation(vec[(slice(None), slice(0, 3))])
        trans = vec[(slice(None), slice(3, 6))]
        return BatchedPose(rot, trans)

    def named_params(self):
        return [p for c in self.convs + [self.head] for p in c.named_params()]

    def named_state(self):
        return []
