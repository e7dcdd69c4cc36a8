"""SSIM, the combined photometric reconstruction loss, and auto-masking.

The per-pixel photometric error is

    alpha * (1 - SSIM) / 2 + (1 - alpha) * |I - I'|

with alpha = 0.85, channel-averaged, and the scalar loss averages it over the
N pixels that projected successfully. SSIM statistics use a 3x3 box filter
with reflect padding and the unit-dynamic-range constants C1 = 0.01^2,
C2 = 0.03^2.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..autodiff import Tensor, as_tensor, ops
from ..errors import DegenerateBatchError, ShapeError

ALPHA_DEFAULT = 0.85
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2

# finite stand-in for +inf when suppressing invalid pixels inside a min
_BIG = 1e9


def ssim(a, b) -> Tensor:
    """Per-pixel, per-channel structural similarity of two (N, C, H, W) images."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"ssim: shapes differ, {a.shape} vs {b.shape}")
    mu_a = ops.avg_pool3x3_reflect(a)
    mu_b = ops.avg_pool3x3_reflect(b)
    var_a = ops.sub(ops.avg_pool3x3_reflect(ops.mul(a, a)), ops.mul(mu_a, mu_a))
    var_b = ops.sub(ops.avg_pool3x3_reflect(ops.mul(b, b)), ops.mul(mu_b, mu_b))
    cov = ops.sub(ops.avg_pool3x3_reflect(ops.mul(a, b)), ops.mul(mu_a, mu_b))
    num = ops.mul(ops.add(ops.mul(2.0, ops.mul(mu_a, mu_b)), SSIM_C1),
                  ops.add(ops.mul(2.0, cov), SSIM_C2))
    den = ops.mul(ops.add(ops.add(ops.mul(mu_a, mu_a), ops.mul(mu_b, mu_b)), SSIM_C1),
                  ops.add(ops.add(var_a, var_b), SSIM_C2))
    return ops.div(num, den)


def photometric_map(target, warped, alpha: float = ALPHA_DEFAULT) -> Tensor:
    """Channel-averaged per-pixel photometric error, shape (N, H, W)."""
    target, warped = as_tensor(target), as_tensor(warped)
    # clamp guards float drift pushing (1 - SSIM)/2 out of [0, 1]
    dssim = ops.clip(ops.mul(0.5, ops.sub(1.0, ssim(target, warped))), 0.0, 1.0)
    l1 = ops.abs_(ops.sub(target, warped))
    combined = ops.add(ops.mul(alpha, dssim), ops.mul(1.0 - alpha, l1))
    return ops.mean(combined, axis=1)


def photometric_loss(target, warped, valid: Optional[np.ndarray] = None,
                     alpha: float = ALPHA_DEFAULT) -> tuple[Tensor, int]:
    """Mean photometric error over valid pixels; returns (loss, pixel count).

    Raises DegenerateBatchError when no pixel is valid, in which case the
    caller must skip the optimization step.
    """
    pixel = photometric_map(target, warped, alpha=alpha)
    if valid is None:
        valid = np.ones(pixel.shape, dtype=bool)
    n = int(valid.sum())
    if n == 0:
        raise DegenerateBatchError("photometric loss has zero valid pixels")
    loss = ops.div(ops.sum_(ops.mul(pixel, valid.astype(np.float64))), float(n))
    return loss, n


def min_reprojection_automask(
    source_maps: Sequence[Tensor],
    source_valids: Sequence[np.ndarray],
    identity_maps: Optional[Sequence[Tensor]] = None,
) -> tuple[Tensor, np.ndarray, int]:
    """Per-pixel minimum over source frames with static-pixel suppression.

    Returns (per-pixel loss map, keep mask, count of pixels valid in any
    source). A pixel is kept only where the minimum warped error is strictly
    below the minimum identity (unwarped) error, so ties and static pixels
    drop out. With ``identity_maps=None`` every any-valid pixel is kept.
    """
    if len(source_maps) == 0:
        raise ValueError("need at least one source frame")
    masked = []
    for pix, val in zip(source_maps, source_valids):
        w = val.astype(np.float64)
        masked.append(ops.add(ops.mul(pix, w), (1.0 - w) * _BIG))
    min_map = masked[0]
    for m in masked[1:]:
        min_map = ops.minimum(min_map, m)
    any_valid = source_valids[0].copy()
    for val in source_valids[1:]:
        any_valid |= val
    keep = any_valid.copy()
    if identity_maps is not None:
        min_identity = identity_maps[0].data.copy()
        for m in identity_maps[1:]:
            min_identity = np.minimum(min_identity, m.data)
        keep &= min_map.data < min_identity
    return min_map, keep, int(any_valid.sum())


def masked_mean(pixel_map: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of a per-pixel map over ``mask``; zero when the mask is empty."""
    n = int(mask.sum())
    if n == 0:
        return Tensor(0.0)
    return ops.div(ops.sum_(ops.mul(pixel_map, mask.astype(np.float64))), float(n))
