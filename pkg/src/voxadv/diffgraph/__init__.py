"""Minimal reverse-mode autodiff core used by the models, attacks, and defenses."""

from .gradcheck import GradCheckReport, grad_check
from .params import Parameters, checkpoint_meta, load_checkpoint, save_checkpoint
from .tensor import (
    Tensor,
    absolute,
    add,
    concat,
    constant,
    conv1d,
    div,
    exp,
    frame_signal,
    log,
    log_softmax,
    matmul,
    maxpool1d,
    mean,
    mul,
    neg,
    power_spectrum,
    relu,
    reshape,
    sqrt,
    sub,
    swapaxes,
    tensor_sum,
)

__all__ = [
    "GradCheckReport",
    "Parameters",
    "Tensor",
    "absolute",
    "add",
    "concat",
    "constant",
    "conv1d",
    "div",
    "exp",
    "frame_signal",
    "grad_check",
    "checkpoint_meta",
    "load_checkpoint",
    "log",
    "log_softmax",
    "matmul",
    "maxpool1d",
    "mean",
    "mul",
    "neg",
    "power_spectrum",
    "relu",
    "reshape",
    "save_checkpoint",
    "sqrt",
    "sub",
    "swapaxes",
    "tensor_sum",
]
