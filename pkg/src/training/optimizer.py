# -*- coding: utf-8 -*-
"""
Adam with an exponentially decaying learning rate.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Tuple

import numpy as np

from src.autodiff import Tensor
from src.errors import NonFiniteError, ShapeError

# Logger configuration
logger = logging.getLogger(__name__)


def exponential_lr(iteration: int, total: int, lr_start: float, lr_end: float) -> float:
    """lr_start * (lr_end / lr_start) ** (iteration / total)."""
    if total <= 0:
        return lr_start
    if not 0 <= iteration <= total:
        raise ValueError(f"iteration {iteration} outside [0, {total}]")
    return lr_start * (lr_end / lr_start) ** (iteration / total)


@dataclass
class AdamState:
    """First and second moment estimates of one tensor."""

    m: np.ndarray
    v: np.ndarray


@dataclass
class Adam:
    """Shared Adam state over named tensors; one bias-correction step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    states: Dict[str, AdamState] = field(default_factory=dict)

    def step(self, named_tensors: Iterable[Tuple[str, Tensor]], lr: float) -> None:
        """Applies one update to every tensor, in the given order.

        Tensors without a gradient are treated as having a zero gradient.
        """
        self.step_count += 1
        for name, tensor in named_tensors:
            grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
            state = self.states.get(name)
            if state is None:
                state = AdamState(np.zeros_like(tensor.data), np.zeros_like(tensor.data))
                self.states[name] = state
            tensor.data = adam_update(tensor.data, grad, state, lr, self.step_count,
                                      self.beta1, self.beta2, self.eps, name=name)


def adam_update(param: np.ndarray, grad: np.ndarray, state: AdamState, lr: float, step: int,
                beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                name: str = "tensor") -> np.ndarray:
    """One bias-corrected Adam step; updates ``state`` in place and returns the new parameter.

    Raises:
        ShapeError: If param, grad and moments differ in shape.
        NonFiniteError: If the gradient contains NaN or infinity.
    """
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise ShapeError(f"adam_update[{name}]", (param.shape, grad.shape))
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError(f"gradient of '{name}'")
    dtype = param.dtype
    state.m = (beta1 * state.m + (1.0 - beta1) * grad).astype(dtype)
    state.v = (beta2 * state.v + (1.0 - beta2) * grad * grad).astype(dtype)
    m_hat = state.m / (1.0 - beta1 ** step)
    v_hat = state.v / (1.0 - beta2 ** step)
    return (param - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(dtype)
