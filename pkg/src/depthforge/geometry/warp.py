"""Differentiable view synthesis: backprojection, projection, sampling, warping.

All functions are batch-first: images (N, C, H, W), depth and coordinate maps
(N, H, W). Out-of-bounds samples yield 0 plus an explicit validity mask; the
photometric loss averages only over valid pixels, so masks, not edge clamps,
define the set of usable reprojections.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..autodiff import Tensor, as_tensor, ops, record
from ..errors import ShapeError
from .camera import BatchedPose, CameraIntrinsics

Z_BEHIND_EPS = 1e-6
BOUNDS_TOL = 1e-6


@lru_cache(maxsize=16)
def _grid_arrays(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    v, u = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                       indexing="ij")
    return u, v


def pixel_grid(h: int, w: int) -> tuple[Tensor, Tensor]:
    """Constant (H, W) tensors of x and y pixel coordinates."""
    u, v = _grid_arrays(h, w)
    return Tensor(u), Tensor(v)


def backproject(depth: Tensor, intrinsics: CameraIntrinsics) -> tuple[Tensor, Tensor, Tensor]:
    """Lift (N, H, W) depth to camera-space points X = D * K^-1 [u, v, 1]."""
    depth = as_tensor(depth)
    n, h, w = depth.shape
    u, v = pixel_grid(h, w)
    rx = ops.div(ops.sub(u, intrinsics.cx), intrinsics.fx)
    ry = ops.div(ops.sub(v, intrinsics.cy), intrinsics.fy)
    x = ops.mul(rx, depth)
    y = ops.mul(ry, depth)
    return x, y, depth


def project(x: Tensor, y: Tensor, z: Tensor, pose: BatchedPose,
            intrinsics: CameraIntrinsics, width: int, height: int,
            ) -> tuple[Tensor, Tensor, np.ndarray]:
    """Transform points and project to continuous pixels; flag invalid ones.

    Invalid means transformed depth <= 1e-6 m or projected outside the
    image rectangle.
    """
    r = pose.rotation
    t = pose.translation
    def rc(i, j):
        e = r[(slice(None), i, j)]
        return ops.reshape(e, (-1, 1, 1))
    def tc(i):
        return ops.reshape(t[(slice(None), i)], (-1, 1, 1))

    xc = ops.add(ops.add(ops.mul(rc(0, 0), x), ops.mul(rc(0, 1), y)),
                 ops.add(ops.mul(rc(0, 2), z), tc(0)))
    yc = ops.add(ops.add(ops.mul(rc(1, 0), x), ops.mul(rc(1, 1), y)),
                 ops.add(ops.mul(rc(1, 2), z), tc(1)))
    zc = ops.add(ops.add(ops.mul(rc(2, 0), x), ops.mul(rc(2, 1), y)),
                 ops.add(ops.mul(rc(2, 2), z), tc(2)))

    in_front = zc.data > Z_BEHIND_EPS
    z_safe = ops.maximum(zc, Z_BEHIND_EPS)
    u = ops.add(ops.div(ops.mul(intrinsics.fx, xc), z_safe), intrinsics.cx)
    v = ops.add(ops.div(ops.mul(intrinsics.fy, yc), z_safe), intrinsics.cy)
    in_image = ((u.data >= -BOUNDS_TOL) & (u.data <= width - 1 + BOUNDS_TOL)
                & (v.data >= -BOUNDS_TOL) & (v.data <= height - 1 + BOUNDS_TOL))
    return u, v, in_front & in_image


def bilinear_sample(img: Tensor, u: Tensor, v: Tensor) -> tuple[Tensor, np.ndarray]:
    """Sample (N, C, H, W) at continuous pixel coords (N, Hs, Ws).

    Differentiable in both the image values and the coordinates. Out-of-range
    coordinates produce 0 and a False validity flag. Exactly-integer
    coordinates reproduce the pixel value bit-for-bit.
    """
    img, u, v = as_tensor(img), as_tensor(u), as_tensor(v)
    if img.ndim != 4 or u.ndim != 3 or u.shape != v.shape or img.shape[0] != u.shape[0]:
        raise ShapeError(f"bilinear_sample: bad shapes img={img.shape}, u={u.shape}, v={v.shape}")
    n, c, h, w = img.shape
    if h < 2 or w < 2:
        raise ShapeError(f"bilinear_sample: image must be at least 2x2, got {h}x{w}")
    hs, ws = u.shape[1], u.shape[2]

    valid = ((u.data >= -BOUNDS_TOL) & (u.data <= w - 1 + BOUNDS_TOL)
             & (v.data >= -BOUNDS_TOL) & (v.data <= h - 1 + BOUNDS_TOL))
    uc = np.clip(u.data, 0.0, w - 1.0)
    vc = np.clip(v.data, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(uc), w - 2).astype(np.int64)
    y0 = np.minimum(np.floor(vc), h - 2).astype(np.int64)
    wx = (uc - x0).reshape(n, -1, 1)
    wy = (vc - y0).reshape(n, -1, 1)

    flat = np.ascontiguousarray(img.data.transpose(0, 2, 3, 1)).reshape(n, h * w, c)
    idx = (y0 * w + x0).reshape(n, -1)

    def gather(offset):
        return np.take_along_axis(flat, (idx + offset)[..., None], axis=1)

    g00, g01, g10, g11 = gather(0), gather(1), gather(w), gather(w + 1)
    out_flat = (g00 * (1.0 - wx) * (1.0 - wy) + g01 * wx * (1.0 - wy)
                + g10 * (1.0 - wx) * wy + g11 * wx * wy)
    out_data = out_flat.reshape(n, hs, ws, c).transpose(0, 3, 1, 2) * valid[:, None]
    out = Tensor(out_data)

    def backward(g):
        gmask = g * valid[:, None]
        gperm = gmask.transpose(0, 2, 3, 1).reshape(n, -1, c)
        dflat = np.zeros((n, h * w, c))
        nn = np.arange(n)[:, None]
        np.add.at(dflat, (nn, idx), gperm * (1.0 - wx) * (1.0 - wy))
        np.add.at(dflat, (nn, idx + 1), gperm * wx * (1.0 - wy))
        np.add.at(dflat, (nn, idx + w), gperm * (1.0 - wx) * wy)
        np.add.at(dflat, (nn, idx + w + 1), gperm * wx * wy)
        dimg = dflat.reshape(n, h, w, c).transpose(0, 3, 1, 2)
        du = (((g01 - g00) * (1.0 - wy) + (g11 - g10) * wy) * gperm).sum(axis=2)
        dv = (((g10 - g00) * (1.0 - wx) + (g11 - g01) * wx) * gperm).sum(axis=2)
        return dimg, du.reshape(u.shape), dv.reshape(v.shape)

    return record(out, (img, u, v), backward), valid


def warp_sequence(src_img: Tensor, depth: Tensor, pose: BatchedPose,
                  intrinsics: CameraIntrinsics) -> tuple[Tensor, np.ndarray]:
    """Synthesize the reference view from ``src_img`` given depth and pose.

    Composition backproject -> project -> bilinear_sample; the returned mask
    is the AND of projection and sampling validity.
    """
    src_img = as_tensor(src_img)
    depth = as_tensor(depth)
    if src_img.shape[0] != depth.shape[0] or src_img.shape[2:] != depth.shape[1:]:
        raise ShapeError(f"warp_sequence: image {src_img.shape} vs depth {depth.shape}")
    n, c, h, w = src_img.shape
    x, y, z = backproject(depth, intrinsics)
    u, v, proj_valid = project(x, y, z, pose, intrinsics, w, h)
    out, samp_valid = bilinear_sample(src_img, u, v)
    return out, proj_valid & samp_valid


def warp_stereo(src_img: Tensor, disparity: Tensor, direction: str) -> tuple[Tensor, np.ndarray]:
    """Horizontal-only rectified-pair warp.

    direction="left" reconstructs the left view by sampling the right image
    at u - d; direction="right" reconstructs the right view by sampling the
    left image at u + d.
    """
    if direction not in ("left", "right"):
        raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")
    src_img = as_tensor(src_img)
    disparity = as_tensor(disparity)
    n, c, h, w = src_img.shape
    ug, vg = _grid_arrays(h, w)
    u0 = Tensor(np.broadcast_to(ug, disparity.shape).copy())
    if direction == "left":
        u = ops.sub(u0, disparity)
    else:
        u = ops.add(u0, disparity)
    v = Tensor(np.broadcast_to(vg, disparity.shape).copy())
    return bilinear_sample(src_img, u, v)
