from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .modules import MLP, BatchNorm, Conv, ConvBlock, Linear, Module, Parameter
from .optim import Adam, MissingGradientError, step_decay_lr
from .tensor import (
    DimensionError,
    NumericError,
    Tensor,
    as_tensor,
    clip,
    concat,
    exp,
    gather,
    log,
    matmul,
    no_grad,
    relu,
    sigmoid,
    softmax,
    tabs,
)

__all__ = [
    "Adam",
    "BatchNorm",
    "Conv",
    "ConvBlock",
    "DimensionError",
    "Linear",
    "MLP",
    "MissingGradientError",
    "Module",
    "NumericError",
    "Parameter",
    "Tensor",
    "as_tensor",
    "clip",
    "concat",
    "exp",
    "gather",
    "grad_check",
    "load_checkpoint",
    "log",
    "matmul",
    "no_grad",
    "relu",
    "save_checkpoint",
    "sigmoid",
    "softmax",
    "step_decay_lr",
    "tabs",
]
