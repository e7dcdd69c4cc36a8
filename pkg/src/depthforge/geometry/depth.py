"""Depth and disparity maps and the conversions between them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, as_tensor, ops
from ..errors import ConfigError

DISPARITY_EPS = 1e-12
DEPTH_MIN_M = 0.1
DEPTH_MAX_M = 100.0


@dataclass
class DepthMap:
    """(N, H, W) metric depth with a validity mask; positive where valid."""

    values: Tensor
    valid: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.valid.shape:
            raise ConfigError(f"depth/valid shapes differ: {self.values.shape} vs {self.valid.shape}")


@dataclass
class DisparityMap:
    """(N, H, W) disparity in pixels with a validity mask; non-negative."""

    values: Tensor
    valid: np.ndarray


def _all_valid(t: Tensor) -> np.ndarray:
    return np.ones(t.shape, dtype=bool)


def disparity_to_depth(disparity, baseline_m: float, focal_px: float) -> DepthMap:
    """D = b f / d. Pixels with d <= eps are marked invalid and set to 0."""
    if baseline_m <= 0 or focal_px <= 0:
        raise ConfigError(f"baseline and focal must be positive, got b={baseline_m}, f={focal_px}")
    if isinstance(disparity, DisparityMap):
        d, valid_in = disparity.values, disparity.valid
    else:
        d = as_tensor(disparity)
        valid_in = _all_valid(d)
    valid = valid_in & (d.data > DISPARITY_EPS)
    safe = ops.maximum(d, DISPARITY_EPS)
    depth = ops.mul(ops.div(baseline_m * focal_px, safe), valid.astype(np.float64))
    return DepthMap(depth, valid)


def depth_to_disparity(depth, baseline_m: float, focal_px: float) -> DisparityMap:
    """d = b f / D, the algebraic inverse of :func:`disparity_to_depth`."""
    if baseline_m <= 0 or focal_px <= 0:
        raise ConfigError(f"baseline and focal must be positive, got b={baseline_m}, f={focal_px}")
    if isinstance(depth, DepthMap):
        dval, valid_in = depth.values, depth.valid
    else:
        dval = as_tensor(depth)
        valid_in = _all_valid(dval)
    valid = valid_in & (dval.data > DISPARITY_EPS)
    safe = ops.maximum(dval, DISPARITY_EPS)
    disp = ops.mul(ops.div(baseline_m * focal_px, safe), valid.astype(np.float64))
    return DisparityMap(disp, valid)


def sigmoid_to_depth(sigma, depth_min: float = DEPTH_MIN_M, depth_max: float = DEPTH_MAX_M) -> DepthMap:
    """Map a (0, 1) activation to metric depth via linear inverse depth.

    D = 1 / (1/D_max + (1/D_min - 1/D_max) * sigma), so sigma=0 gives D_max
    and sigma=1 gives D_min.
    """
    sigma = as_tensor(sigma)
    inv = ops.add(1.0 / depth_max, ops.mul(1.0 / depth_min - 1.0 / depth_max, sigma))
    depth = ops.div(1.0, inv)
    return DepthMap(depth, _all_valid(sigma))
