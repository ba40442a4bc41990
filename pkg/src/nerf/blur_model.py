# -*- coding: utf-8 -*-
"""
Irradiance-space blending with gamma correction, and the training losses.
"""

import logging
from dataclasses import dataclass

import numpy as np

from src.autodiff import Tensor, as_tensor, mean, norm, pow, reshape, square
from src.autodiff import sum as tsum
from src.errors import NonFiniteError, ShapeError

# Logger configuration
logger = logging.getLogger(__name__)

GAMMA = 2.2
# The derivative of x^(1/2.2) diverges at 0; it is evaluated at max(x, this).
GAMMA_GRAD_FLOOR = 1e-6
WEIGHT_SUM_TOLERANCE = 1e-4


@dataclass
class LossWeights:
    """Weights of the origin term (lambda_o) and of the alignment loss (lambda_a)."""

    lambda_o: float = 10.0
    lambda_a: float = 0.1


def gamma_correct(linear) -> Tensor:
    """Maps linear irradiance to display values with g(c) = c^(1/2.2)."""
    linear = as_tensor(linear)
    if np.any(linear.data < 0):
        raise ValueError("gamma correction needs non-negative linear values")
    return pow(linear, 1.0 / GAMMA, grad_floor=GAMMA_GRAD_FLOOR)


def gamma_encode(linear: np.ndarray) -> np.ndarray:
    """Array version of ``gamma_correct`` for images that need no gradient."""
    return np.power(np.clip(linear, 0.0, None), 1.0 / GAMMA)


def gamma_decode(display: np.ndarray) -> np.ndarray:
    return np.power(np.clip(display, 0.0, None), GAMMA)


def blend_blurry(colors: Tensor, weights: Tensor, gamma: bool = True) -> Tensor:
    """Blends the N kernel-ray colors of each pixel into a blurry display color.

    Args:
        colors: (batch, N, 3) colors rendered along the kernel rays.
        weights: (batch, N) positive weights summing to one.
        gamma: Blend linear irradiance and then apply g; when False the colors
            are taken as display values and blended directly.

    Returns:
        (batch, 3) blurry display colors.
    """
    colors, weights = as_tensor(colors), as_tensor(weights)
    if colors.shape[:-1] != weights.shape:
        raise ShapeError("blend_blurry", (colors.shape, weights.shape))
    totals = weights.data.sum(axis=-1)
    if np.any(np.abs(totals - 1.0) > WEIGHT_SUM_TOLERANCE):
        raise ValueError(f"kernel weights must sum to 1, got sums in [{totals.min()}, {totals.max()}]")
    mixed = tsum(reshape(weights, weights.shape + (1,)) * colors, axis=-2)
    return gamma_correct(mixed) if gamma else mixed


def reconstruction_loss(predicted: Tensor, observed) -> Tensor:
    """Mean over rays of the squared L2 color distance."""
    predicted, observed = as_tensor(predicted), as_tensor(observed)
    if predicted.shape != observed.shape:
        raise ShapeError("reconstruction_loss", (predicted.shape, observed.shape))
    if predicted.size == 0:
        raise ValueError("reconstruction loss over an empty batch")
    return mean(tsum(square(predicted - observed), axis=-1))


def alignment_loss(q_0: Tensor, p, delta_o_0: Tensor, lambda_o: float = 10.0) -> Tensor:
    """Keeps the anchor ray on the input ray: mean of |q_0 - p| + lambda_o |do_0|.

    Args:
        q_0: (batch, 2) deformed anchor pixels.
        p: (batch, 2) target pixels.
        delta_o_0: (batch, 3) anchor origin translations.
        lambda_o: Weight of the origin term.
    """
    q_0, p, delta_o_0 = as_tensor(q_0), as_tensor(p), as_tensor(delta_o_0)
    return mean(norm(q_0 - p, axis=-1) + lambda_o * norm(delta_o_0, axis=-1))


def total_loss(rec: Tensor, align: Tensor, lambda_a: float = 0.1) -> Tensor:
    """rec + lambda_a * align."""
    rec, align = as_tensor(rec), as_tensor(align)
    if not (np.all(np.isfinite(rec.data)) and np.all(np.isfinite(align.data))):
        raise NonFiniteError("loss terms")
    return rec + lambda_a * align
