"""Pinhole camera model and rigid transforms.

Conventions: pixel centers at integer coordinates, x to the right, y down,
homogeneous pixels [u, v, 1]. Intrinsics are shared across a scene.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, as_tensor, ops
from ..errors import ConfigError


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def inverse_matrix(self) -> np.ndarray:
        return np.array([[1.0 / self.fx, 0.0, -self.cx / self.fx],
                         [0.0, 1.0 / self.fy, -self.cy / self.fy],
                         [0.0, 0.0, 1.0]])


class RigidTransform:
    """Rotation + translation mapping reference-camera points into another camera."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation, translation):
        self.rotation = np.asarray(rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(translation, dtype=np.float64).reshape(3)
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > 1e-9:
            raise ConfigError(f"rotation is not orthonormal (max |R^T R - I| = {err:.3e})")
        det = np.linalg.det(self.rotation)
        if abs(det - 1.0) > 1e-9:
            raise ConfigError(f"rotation determinant must be +1, got {det!r}")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_axis_angle(cls, axis_angle, translation) -> "RigidTransform":
        """Rodrigues rotation from an axis-angle 3-vector (constant, not traced)."""
        r = np.asarray(axis_angle, dtype=np.float64).reshape(3)
        theta = float(np.linalg.norm(r))
        if theta < 1e-12:
            return cls(np.eye(3), translation)
        k = r / theta
        kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        rot = np.eye(3) + np.sin(theta) * kx + (1.0 - np.cos(theta)) * (kx @ kx)
        return cls(rot, translation)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (..., 3) array of points."""
        return points @ self.rotation.T + self.translation

    def __repr__(self) -> str:
        return f"RigidTransform(t={self.translation.tolist()})"


class BatchedPose:
    """A batch of rigid transforms held as tensors so pose can be optimized.

    ``rotation`` is (N, 3, 3), ``translation`` (N, 3). Built either from
    constant :class:`RigidTransform` objects or differentiably by the pose
    network.
    """

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation: Tensor, translation: Tensor):
        self.rotation = rotation
        self.translation = translation

    @classmethod
    def from_transforms(cls, transforms: list[RigidTransform]) -> "BatchedPose":
        rot = np.stack([t.rotation for t in transforms])
        tr = np.stack([t.translation for t in transforms])
        return cls(Tensor(rot), Tensor(tr))

    @property
    def batch_size(self) -> int:
        return self.rotation.shape[0]

    def transform(self, i: int) -> RigidTransform:
        return RigidTransform(self.rotation.data[i], self.translation.data[i])


def axis_angle_rotation(r: Tensor) -> Tensor:
    """Differentiable Rodrigues map from (N, 3) axis-angle vectors to (N, 3, 3).

    Uses sin(t)/t and 2 sin^2(t/2)/t^2, both numerically stable near t = 0;
    a 1e-300 floor keeps the zero vector finite and exact (identity).
    """
    r = as_tensor(r)
    rx, ry, rz = r[(slice(None), 0)], r[(slice(None), 1)], r[(slice(None), 2)]
    xx, yy, zz = ops.square(rx), ops.square(ry), ops.square(rz)
    sq = xx + yy + (zz + 1e-300)
    theta = ops.sqrt(sq)
    a = ops.sin(theta) / theta
    half = ops.sin(0.5 * theta)
    b = 2.0 * ops.square(half) / sq

    entries = [
        1.0 - b * (yy + zz), b * rx * ry - a * rz, a * ry + b * rx * rz,
        a * rz + b * rx * ry, 1.0 - b * (xx + zz), b * ry * rz - a * rx,
        b * rx * rz - a * ry, a * rx + b * ry * rz, 1.0 - b * (xx + yy),
    ]
    cols = [ops.reshape(e, (-1, 1)) for e in entries]
    return ops.reshape(ops.concat(cols, axis=1), (-1, 3, 3))
