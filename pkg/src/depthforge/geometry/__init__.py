"""Camera model, depth conversions, differentiable warping, point clouds."""

from .camera import BatchedPose, CameraIntrinsics, RigidTransform, axis_angle_rotation
from .depth import (DEPTH_MAX_M, DEPTH_MIN_M, DepthMap, DisparityMap,
                    depth_to_disparity, disparity_to_depth, sigmoid_to_depth)
from .pointcloud import export_point_cloud
from .warp import backproject, bilinear_sample, pixel_grid, project, warp_sequence, warp_stereo

__all__ = [
    "BatchedPose",
    "CameraIntrinsics",
    "DEPTH_MAX_M",
    "DEPTH_MIN_M",
    "DepthMap",
    "DisparityMap",
    "RigidTransform",
    "axis_angle_rotation",
    "backproject",
    "bilinear_sample",
    "depth_to_disparity",
    "disparity_to_depth",
    "export_point_cloud",
    "pixel_grid",
    "project",
    "sigmoid_to_depth",
    "warp_sequence",
    "warp_stereo",
]
