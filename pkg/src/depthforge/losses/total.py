"""Weighted combination of the training objectives.

total = photo + lambda_smooth * smooth + lambda_seg * seg, with the defaults
lambda_seg = 1, lambda_smooth = 1e-3 and the SSIM/L1 mix alpha = 0.85.
Multi-scale photometric and smoothness terms are passed as sequences and
averaged with equal scale weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from ..autodiff import Tensor, ops
from ..errors import ConfigError, NumericError

TensorOrParts = Union[Tensor, Sequence[Tensor]]


@dataclass(frozen=True)
class LossWeights:
    lambda_seg: float = 1.0
    lambda_smooth: float = 1e-3
    alpha_ssim: float = 0.85

    def __post_init__(self):
        for name in ("lambda_seg", "lambda_smooth", "alpha_ssim"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")


@dataclass
class LossBreakdown:
    photo: float
    smooth: float
    seg: float
    total: float
    valid_pixel_count: int

    def csv_row(self, iteration: int) -> str:
        fields = [f"{v:.17g}" for v in (self.photo, self.smooth, self.seg, self.total)]
        return f"{iteration},{','.join(fields)},{self.valid_pixel_count}"

    @staticmethod
    def csv_header() -> str:
        return "iter,photo,smooth,seg,total,valid_px"


def _average(parts: TensorOrParts, name: str) -> Tensor:
    if isinstance(parts, Tensor):
        avg = parts
    else:
        parts = list(parts)
        if not parts:
            raise ConfigError(f"{name}: need at least one scale term")
        acc = parts[0]
        for p in parts[1:]:
            acc = ops.add(acc, p)
        avg = ops.div(acc, float(len(parts)))
    if not math.isfinite(float(avg.data)):
        raise NumericError(f"loss term '{name}' is not finite: {float(avg.data)!r}")
    return avg


def total_loss(photo: TensorOrParts, smooth: TensorOrParts,
               seg: Optional[Tensor], weights: LossWeights,
               valid_pixel_count: int = 0) -> tuple[Tensor, LossBreakdown]:
    """Combine the loss parts; returns the scalar graph node and a float report."""
    photo_avg = _average(photo, "photo")
    smooth_avg = _average(smooth, "smooth")
    total = ops.add(photo_avg, ops.mul(weights.lambda_smooth, smooth_avg))
    seg_val = 0.0
    if seg is not None:
        seg_avg = _average(seg, "seg")
        total = ops.add(total, ops.mul(weights.lambda_seg, seg_avg))
        seg_val = float(seg_avg.data)
    breakdown = LossBreakdown(
        photo=float(photo_avg.data),
        smooth=float(smooth_avg.data),
        seg=seg_val,
        total=float(total.data),
        valid_pixel_count=int(valid_pixel_count),
    )
    return total, breakdown
