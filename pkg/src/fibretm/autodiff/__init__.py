from .gradcheck import GradCheckReport, gradient_check
from .optim import Adam, NonFiniteGradientError, clip_grad_norm
from .tensor import (
    ShapeError,
    Tensor,
    add,
    backward,
    conv2d,
    dense,
    getitem,
    l1_mean,
    leaky_relu,
    make,
    matmul,
    maxpool2d,
    mse_mean,
    mul,
    no_grad,
    pad2d,
    reshape,
    scale,
    softmax,
    sum,
    topological_order,
    transpose,
    upsample2d,
)

__all__ = [
    "Adam", "GradCheckReport", "NonFiniteGradientError", "ShapeError", "Tensor", "add", "backward",
    "clip_grad_norm", "conv2d", "dense", "getitem", "gradient_check", "l1_mean", "leaky_relu", "make",
    "matmul", "maxpool2d", "mse_mean", "mul", "no_grad", "pad2d", "reshape", "scale", "softmax", "sum",
    "topological_order", "transpose", "upsample2d",
]
