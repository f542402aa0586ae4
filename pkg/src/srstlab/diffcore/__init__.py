"""Differentiable core: float64 tape autodiff and score networks."""

from .tape import Var, add, as_var, backward, div, exp, log, matmul, mul, relu
from .tape import softmax_rows, sub, tanh, vmean, vsum
from .network import (
    ACTIVATIONS,
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
    ParamSet,
    ScoreNet,
    check_compatible,
    forward_logits,
    forward_var,
    grad_input,
    grad_params,
    init_params,
    load_params,
    predict,
    save_params,
    softmax,
    temp_softmax,
    temp_softmax_var,
    zeros_like_params,
)

__all__ = [
    "Var", "add", "as_var", "backward", "div", "exp", "log", "matmul", "mul",
    "relu", "softmax_rows", "sub", "tanh", "vmean", "vsum",
    "ACTIVATIONS", "CHECKPOINT_MAGIC", "CHECKPOINT_VERSION", "ParamSet",
    "ScoreNet", "check_compatible", "forward_logits", "forward_var",
    "grad_input", "grad_params", "init_params", "load_params", "predict",
    "save_params", "softmax", "temp_softmax", "temp_softmax_var",
    "zeros_like_params",
]
