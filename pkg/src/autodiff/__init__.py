# Initialization of the autodiff package
# Reverse-mode differentiation used by the field and kernel networks

from .tensor import (
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    broadcast_to,
    concat,
    cos,
    div,
    exp,
    get_default_dtype,
    get_tape,
    getitem,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    norm,
    pow,
    precision,
    relu,
    reset_tape,
    reshape,
    sigmoid,
    sin,
    softmax,
    softplus,
    square,
    sub,
    sum,
)
from .gradcheck import grad_check, grad_check_tensors

__all__ = [
    "Tape", "Tensor", "add", "as_tensor", "backward", "broadcast_to", "concat", "cos",
    "div", "exp", "get_default_dtype", "get_tape", "getitem", "matmul", "mean", "mul",
    "neg", "no_grad", "norm", "pow", "precision", "relu", "reset_tape", "reshape",
    "sigmoid", "sin", "softmax", "softplus", "square", "sub", "sum",
    "grad_check", "grad_check_tensors",
]
