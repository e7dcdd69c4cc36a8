"""Network building blocks and the assembled two-task model."""

from .checkpoint import load_checkpoint, save_checkpoint
from .decoder import DecoderPair
from .encoder import ResidualBlock, SharedEncoder
from .fusion import AffinityPropagationUnit, CrossPropagationUnit, affinity_matrix
from .layers import (OWNER_DEPTH, OWNER_SEG, OWNER_SHARED, BatchNorm2d, Conv2d, Linear,
                     SEBlock, TaskBatchNorm, TaskResidualAdapter, TaskSE)
from .model import TOY_DECODER_CHANNELS, TOY_ENCODER_CHANNELS, MultiTaskDepthNet
from .pose import PoseNet

__all__ = [
    "AffinityPropagationUnit",
    "BatchNorm2d",
    "Conv2d",
    "CrossPropagationUnit",
    "DecoderPair",
    "Linear",
    "MultiTaskDepthNet",
    "OWNER_DEPTH",
    "OWNER_SEG",
    "OWNER_SHARED",
    "PoseNet",
    "ResidualBlock",
    "SEBlock",
    "SharedEncoder",
    "TaskBatchNorm",
    "TaskResidualAdapter",
    "TaskSE",
    "TOY_DECODER_CHANNELS",
    "TOY_ENCODER_CHANNELS",
    "affinity_matrix",
    "load_checkpoint",
    "save_checkpoint",
]
