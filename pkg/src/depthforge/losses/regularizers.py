"""Edge-aware smoothness on mean-normalized disparity."""

from __future__ import annotations

from ..autodiff import Tensor, as_tensor, ops
from ..errors import DegenerateBatchError, ShapeError

MEAN_EPS = 1e-12


def smoothness_loss(disparity, image) -> Tensor:
    """Penalize disparity gradients except across image edges.

    ``disparity`` is (N, H, W), ``image`` (N, C, H, W). The disparity is
    normalized by its per-sample mean, gradients are forward differences, and
    each term is weighted by exp(-|image gradient|) with the image gradient
    magnitude averaged over channels.
    """
    d = as_tensor(disparity)
    img = as_tensor(image)
    if d.ndim != 3 or img.ndim != 4 or img.shape[2:] != d.shape[1:]:
        raise ShapeError(f"smoothness_loss: disparity {d.shape} vs image {img.shape}")
    if (d.data.mean(axis=(1, 2)) <= MEAN_EPS).any():
        raise DegenerateBatchError("disparity mean is not positive; cannot normalize")

    dstar = ops.div(d, ops.mean(d, axis=(1, 2), keepdims=True))
    grad_dx = ops.abs_(ops.sub(dstar[:, :, 1:], dstar[:, :, :-1]))
    grad_dy = ops.abs_(ops.sub(dstar[:, 1:, :], dstar[:, :-1, :]))

    img_gx = ops.mean(ops.abs_(ops.sub(img[:, :, :, 1:], img[:, :, :, :-1])), axis=1)
    img_gy = ops.mean(ops.abs_(ops.sub(img[:, :, 1:, :], img[:, :, :-1, :])), axis=1)
    wx = ops.exp(ops.neg(img_gx))
    wy = ops.exp(ops.neg(img_gy))

    return ops.add(ops.mean(ops.mul(grad_dx, wx)), ops.mean(ops.mul(grad_dy, wy)))
