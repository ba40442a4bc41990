# -*- coding: utf-8 -*-
"""
Finite-difference verification of the analytic gradients produced by the tape.
"""

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from src.autodiff.tensor import Tensor, backward, no_grad, precision, reset_tape
from src.errors import NonFiniteError

# Logger configuration
logger = logging.getLogger(__name__)


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric))):
        raise NonFiniteError("gradient check")
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / denom))


def _scalar(value: Tensor) -> float:
    result = float(np.asarray(value.data).reshape(-1)[0])
    if not np.isfinite(result):
        raise NonFiniteError("gradient check function value")
    return result


def grad_check(function: Callable[[Tensor], Tensor], point, step: float = 1e-3,
               dtype=np.float64) -> float:
    """Compares the tape gradient of ``function`` at ``point`` with central differences.

    Args:
        function: Maps a tensor shaped like ``point`` to a scalar tensor.
        point: Where to evaluate the gradient.
        step: Central-difference half width, must be positive.
        dtype: Precision of the evaluation, float64 by default.

    Returns:
        max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if step <= 0:
        raise ValueError("step must be positive")

    with precision(dtype):
        point = np.array(point, dtype=dtype)
        reset_tape()
        x = Tensor(point, requires_grad=True)
        value = function(x)
        _scalar(value)
        if value.requires_grad:
            backward(value)
        analytic = x.grad if x.grad is not None else np.zeros_like(point)
        reset_tape()

        numeric = np.zeros_like(point)
        with no_grad():
            for index in np.ndindex(point.shape):
                shifted = point.copy()
                shifted[index] += step
                f_plus = _scalar(function(Tensor(shifted)))
                shifted[index] -= 2.0 * step
                f_minus = _scalar(function(Tensor(shifted)))
                numeric[index] = (f_plus - f_minus) / (2.0 * step)

    error = _relative_error(analytic, numeric)
    logger.debug(f"grad_check over {point.size} coordinates: max relative error {error:.3e}")
    return error


def grad_check_tensors(loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor],
                       step: float = 1e-4, max_coords: Optional[int] = None,
                       rng: Optional[np.random.Generator] = None) -> float:
    """Checks gradients of a closure with respect to existing leaf tensors.

    The tensors are perturbed in place and restored. Evaluation runs in the
    precision the tensors were created with.

    Args:
        loss_fn: Builds the scalar loss from the current tensor values.
        tensors: Leaves with ``requires_grad`` set.
        step: Central-difference half width.
        max_coords: When set, a random subset of this many coordinates per
            tensor is checked.
        rng: Generator for the subset choice.

    Returns:
        The largest relative error over all checked coordinates.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    rng = rng if rng is not None else np.random.default_rng(0)

    reset_tape()
    for tensor in tensors:
        tensor.zero_grad()
    loss = loss_fn()
    _scalar(loss)
    backward(loss)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    reset_tape()

    worst = 0.0
    with no_grad():
        for tensor, grad in zip(tensors, analytic):
            flat = tensor.data.reshape(-1)
            coords = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
            numeric = np.zeros(coords.size, dtype=np.float64)
            for k, coord in enumerate(coords):
                original = flat[coord]
                flat[coord] = original + step
                f_plus = _scalar(loss_fn())
                flat[coord] = original - step
                f_minus = _scalar(loss_fn())
                flat[coord] = original
                numeric[k] = (f_plus - f_minus) / (2.0 * step)
            worst = max(worst, _relative_error(grad.reshape(-1)[coords].astype(np.float64), numeric))
    return worst
