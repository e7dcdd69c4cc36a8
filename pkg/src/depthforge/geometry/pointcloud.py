"""ASCII PLY export of colored point clouds from depth maps."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .camera import CameraIntrinsics

_HEADER = """ply
format ascii 1.0
element vertex {count}
property float x
property float y
property float z
property uchar red
property uchar green
property uchar blue
end_header
"""


def export_point_cloud(depth: np.ndarray, image: np.ndarray,
                       intrinsics: CameraIntrinsics,
                       valid: np.ndarray | None = None) -> bytes:
    """One colored vertex per valid pixel, in camera coordinates (meters).

    ``depth`` is (H, W) meters, ``image`` (3, H, W) in [0, 1]. Returns the
    full PLY file as bytes; the header vertex count always matches the number
    of emitted lines.
    """
    depth = np.asarray(depth, dtype=np.float64)
    image = np.asarray(image, dtype=np.float64)
    if depth.ndim != 2 or image.shape != (3,) + depth.shape:
        raise ShapeError(f"export_point_cloud: depth {depth.shape} vs image {image.shape}")
    h, w = depth.shape
    if valid is None:
        valid = depth > 0
    else:
        valid = np.asarray(valid, dtype=bool) & (depth > 0)

    v, u = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                       indexing="ij")
    z = depth[valid]
    x = (u[valid] - intrinsics.cx) / intrinsics.fx * z
    y = (v[valid] - intrinsics.cy) / intrinsics.fy * z
    rgb = np.clip(np.rint(image[:, valid] * 255.0), 0, 255).astype(np.uint8)

    lines = [_HEADER.format(count=z.size)]
    for i in range(z.size):
        lines.append(f"{x[i]:.12g} {y[i]:.12g} {z[i]:.12g} "
                     f"{rgb[0, i]} {rgb[1, i]} {rgb[2, i]}\n")
    return "".join(lines).encode("utf-8")
