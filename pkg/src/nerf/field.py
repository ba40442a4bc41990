# -*- coding: utf-8 -*-
"""
The sharp radiance field.

A frequency encoding of position (and direction) feeds an MLP that outputs
linear-space color through a sigmoid and density through a softplus.

Layout: ``depth`` ReLU trunk layers of ``width`` channels, with the position
encoding concatenated again at the input of trunk layer ``skip_layer``. The
density head reads the last trunk layer. The color branch concatenates the
trunk output with the direction encoding, applies one ReLU layer of
``color_width`` channels and a 3-channel sigmoid head.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.autodiff import Tensor, concat, cos, relu, reshape, sigmoid, sin, softplus
from src.errors import ConfigError, NonFiniteError
from src.nerf.layers import ParameterSet, dense, init_layer

# Logger configuration
logger = logging.getLogger(__name__)


@dataclass
class EncodingConfig:
    """Frequency counts for the positional encoding.

    Attributes:
        position_freqs: Frequencies used for 3-D positions (L_x).
        direction_freqs: Frequencies used for view directions (L_d); 0 disables
            the direction input.
    """

    position_freqs: int = 6
    direction_freqs: int = 2

    def __post_init__(self):
        if self.position_freqs < 1 or self.direction_freqs < 0:
            raise ConfigError(
                f"invalid encoding frequencies: L_x={self.position_freqs}, L_d={self.direction_freqs}"
            )

    @property
    def position_dim(self) -> int:
        return 3 * 2 * self.position_freqs

    @property
    def direction_dim(self) -> int:
        return 3 * 2 * self.direction_freqs


def positional_encode(x: Tensor, num_freqs: int) -> Tensor:
    """Encodes each element as [sin(pi x), cos(pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)].

    Args:
        x: Tensor of shape (..., dim).
        num_freqs: L, at least 1.

    Returns:
        Tensor of shape (..., dim * 2 * L), element-major.
    """
    if num_freqs < 1:
        raise ValueError(f"positional encoding needs at least one frequency, got {num_freqs}")
    if not isinstance(x, Tensor):
        x = Tensor(x)
    freqs = (2.0 ** np.arange(num_freqs)) * np.pi
    scaled = reshape(x, x.shape + (1,)) * freqs
    pairs = concat([reshape(sin(scaled), scaled.shape + (1,)),
                    reshape(cos(scaled), scaled.shape + (1,))], axis=-1)
    return reshape(pairs, x.shape[:-1] + (x.shape[-1] * 2 * num_freqs,))


class RadianceFieldParams(ParameterSet):
    """Weights of the radiance field MLP."""

    def __init__(self, encoding: Optional[EncodingConfig] = None, width: int = 64,
                 depth: int = 4, skip_layer: int = 2, color_width: int = 32,
                 rng: Optional[np.random.Generator] = None, zero: bool = False):
        super().__init__()
        self.encoding = encoding or EncodingConfig()
        self.width = width
        self.depth = depth
        self.skip_layer = skip_layer
        self.color_width = color_width
        if depth < 1 or width < 1 or color_width < 1:
            raise ConfigError(f"invalid field size: depth={depth}, width={width}, color_width={color_width}")
        rng = rng if rng is not None else np.random.default_rng(0)

        pos_dim = self.encoding.position_dim
        for i in range(depth):
            fan_in = pos_dim if i == 0 else width
            if self._skips_at(i):
                fan_in += pos_dim
            self.add_layer(f"trunk.{i}", init_layer(rng, fan_in, width, zero=zero))
        self.add_layer("sigma", init_layer(rng, width, 1, gain=1.0, zero=zero))
        self.add_layer("color_hidden", init_layer(rng, width + self.encoding.direction_dim, color_width, zero=zero))
        self.add_layer("color", init_layer(rng, color_width, 3, gain=1.0, zero=zero))
        logger.debug(f"Radiance field initialized with {sum(t.size for t in self.parameters())} parameters")

    def _skips_at(self, layer: int) -> bool:
        return 0 < self.skip_layer < self.depth and layer == self.skip_layer

    def describe(self) -> dict:
        return {
            "position_freqs": self.encoding.position_freqs,
            "direction_freqs": self.encoding.direction_freqs,
            "width": self.width,
            "depth": self.depth,
            "skip_layer": self.skip_layer,
            "color_width": self.color_width,
        }


def eval_field(params: RadianceFieldParams, x: Tensor, d: Tensor) -> Tuple[Tensor, Tensor]:
    """Evaluates color and density at positions ``x`` seen along unit directions ``d``.

    Args:
        params: Field weights.
        x: Positions, shape (..., 3), scene units.
        d: Unit directions with the same shape as ``x``.

    Returns:
        (color, sigma): linear RGB in [0, 1] of shape (..., 3) and density >= 0
        of shape (...).
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    d = d if isinstance(d, Tensor) else Tensor(d)
    if not (np.all(np.isfinite(x.data)) and np.all(np.isfinite(d.data))):
        raise NonFiniteError("field input")

    encoded_x = positional_encode(x, params.encoding.position_freqs)
    h = encoded_x
    for i in range(params.depth):
        if params._skips_at(i):
            h = concat([h, encoded_x], axis=-1)
        h = relu(dense(h, params[f"trunk.{i}.weight"], params[f"trunk.{i}.bias"]))

    sigma = softplus(dense(h, params["sigma.weight"], params["sigma.bias"]))
    sigma = reshape(sigma, sigma.shape[:-1])

    if params.encoding.direction_freqs > 0:
        h = concat([h, positional_encode(d, params.encoding.direction_freqs)], axis=-1)
    h = relu(dense(h, params["color_hidden.weight"], params["color_hidden.bias"]))
    color = sigmoid(dense(h, params["color.weight"], params["color.bias"]))
    return color, sigma
