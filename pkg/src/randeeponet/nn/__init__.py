from .layers import AvgPool2D, Conv2D, Dense, Flatten, LAYER_KINDS, ReLU, ResNetBlock
from .network import (
    NetworkSpec,
    ParamStore,
    backward,
    central_difference_check,
    forward,
    grad_check,
    init_params,
    relu_margin,
)
from .optim import Optimizer

__all__ = [
    "AvgPool2D", "Conv2D", "Dense", "Flatten", "LAYER_KINDS", "ReLU", "ResNetBlock",
    "NetworkSpec", "ParamStore", "backward", "central_difference_check", "forward",
    "grad_check", "init_params", "relu_margin", "Optimizer",
]
