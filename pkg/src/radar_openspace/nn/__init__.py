from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .layers import (
    BatchNorm2d,
    BilinearResize,
    Conv2d,
    ConvTranspose2d,
    DepthwiseConv2d,
    GlobalAvgPool,
    Layer,
    ReLU6,
    concat,
    softmax,
    split_like,
)
from .loss import WeightedCrossEntropy
from .params import Param, ParamStore, rmsprop_step, zero_grads

__all__ = [
    "BatchNorm2d",
    "BilinearResize",
    "CheckpointError",
    "Conv2d",
    "ConvTranspose2d",
    "DepthwiseConv2d",
    "GlobalAvgPool",
    "GradCheckReport",
    "Layer",
    "Param",
    "ParamStore",
    "ReLU6",
    "WeightedCrossEntropy",
    "concat",
    "grad_check",
    "load_checkpoint",
    "rmsprop_step",
    "save_checkpoint",
    "softmax",
    "split_like",
    "zero_grads",
]
