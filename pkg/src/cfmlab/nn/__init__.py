"""Minimal numpy tensor library: autodiff, layers, Adam, gradient checking."""
from .gradcheck import GradCheckReport, grad_check, relative_error
from .params import ParamStore, adam_step, glorot_uniform, init_conv, init_conv_transpose, init_dense
from .tensor import (
    NonFiniteError,
    Tensor,
    as_tensor,
    concat,
    conv2d,
    conv_output_size,
    conv_transpose2d,
    dense,
    exp,
    leaky_relu,
    log,
    logsumexp,
    matmul,
    no_grad,
    record_kinks,
    sorted_mean,
)

__all__ = [
    "GradCheckReport",
    "NonFiniteError",
    "ParamStore",
    "Tensor",
    "adam_step",
    "as_tensor",
    "concat",
    "conv2d",
    "conv_output_size",
    "conv_transpose2d",
    "dense",
    "exp",
    "glorot_uniform",
    "grad_check",
    "init_conv",
    "init_conv_transpose",
    "init_dense",
    "leaky_relu",
    "log",
    "logsumexp",
    "matmul",
    "no_grad",
    "record_kinks",
    "relative_error",
    "sorted_mean",
]
