# -*- coding: utf-8 -*-
"""
Dense-layer helpers shared by the radiance field and the kernel network.
"""

from collections import OrderedDict
from typing import Dict, Iterable, Tuple

import numpy as np

from src.autodiff import Tensor, matmul
from src.errors import ShapeError


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Applies ``x @ weight + bias`` over the last axis of ``x``.

    Leading axes are flattened so the weight gradient is a single 2-D product.
    """
    lead = x.shape[:-1]
    flat = x.reshape((-1, x.shape[-1]))
    out = matmul(flat, weight) + bias
    return out.reshape(lead + (weight.shape[-1],))


def init_layer(rng: np.random.Generator, fan_in: int, fan_out: int,
               gain: float = 2.0, zero: bool = False) -> Tuple[Tensor, Tensor]:
    """Creates a uniform-initialized weight matrix and a zero bias.

    Args:
        rng: Seeded generator.
        fan_in: Input width.
        fan_out: Output width.
        gain: 2.0 for ReLU layers (He), 1.0 for linear heads.
        zero: Zero the weight too.
    """
    if zero:
        weight = np.zeros((fan_in, fan_out))
    else:
        limit = np.sqrt(3.0 * gain / fan_in)
        weight = rng.uniform(-limit, limit, size=(fan_in, fan_out))
    return Tensor(weight, requires_grad=True), Tensor(np.zeros(fan_out), requires_grad=True)


class ParameterSet:
    """Ordered, named collection of learnable tensors."""

    def __init__(self):
        self.tensors: "OrderedDict[str, Tensor]" = OrderedDict()

    def add_layer(self, name: str, layer: Tuple[Tensor, Tensor]) -> None:
        self.tensors[f"{name}.weight"], self.tensors[f"{name}.bias"] = layer

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def named_tensors(self) -> Iterable[Tuple[str, Tensor]]:
        return self.tensors.items()

    def parameters(self):
        return list(self.tensors.values())

    def zero_grad(self) -> None:
        for tensor in self.tensors.values():
            tensor.zero_grad()

    def state(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.tensors.items()}

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        """Copies arrays into the existing tensors, checking names and shapes."""
        missing = set(self.tensors) - set(state)
        if missing:
            raise KeyError(f"missing tensors: {sorted(missing)}")
        for name, tensor in self.tensors.items():
            value = np.asarray(state[name])
            if value.shape != tensor.shape:
                raise ShapeError(f"load {name}", (tensor.shape, value.shape))
            tensor.data = value.astype(tensor.dtype, copy=True)
