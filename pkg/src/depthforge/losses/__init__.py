"""Training objectives: photometric, smoothness, segmentation, total."""

from .photometric import (ALPHA_DEFAULT, masked_mean, min_reprojection_automask,
                          photometric_loss, photometric_map, ssim)
from .regularizers import smoothness_loss
from .segmentation import IGNORE_INDEX, cross_entropy_seg
from .total import LossBreakdown, LossWeights, total_loss

__all__ = [
    "ALPHA_DEFAULT",
    "IGNORE_INDEX",
    "LossBreakdown",
    "LossWeights",
    "cross_entropy_seg",
    "masked_mean",
    "min_reprojection_automask",
    "photometric_loss",
    "photometric_map",
    "smoothness_loss",
    "ssim",
    "total_loss",
]
