# -*- coding: utf-8 -*-
"""
Minimal reverse-mode automatic differentiation over dense numpy arrays.

Every operation whose inputs require gradients appends a node to a single
module-level tape. Because nodes are appended in execution order, the tape
is already topologically sorted and backward simply walks it in reverse.
"""

import contextlib
import logging
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import BackwardError, ShapeError

# Logger configuration
# Logging is not configured here, it is done in main.py
logger = logging.getLogger(__name__)

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]

_default_dtype = np.float32
_grad_enabled = True


def get_default_dtype() -> type:
    """Returns the dtype new tensors are created with."""
    return _default_dtype


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switches the default tensor dtype (float32 or float64)."""
    global _default_dtype
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported precision: {dtype}")
    previous = _default_dtype
    _default_dtype = dtype
    try:
        yield
    finally:
        _default_dtype = previous


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disables tape recording inside the block."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class _Node:
    __slots__ = ("op", "output", "inputs", "backward_fn")

    def __init__(self, op: str, output: "Tensor", inputs: Tuple["Tensor", ...],
                 backward_fn: Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]):
        self.op = op
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of executed operations with their saved intermediates."""

    def __init__(self):
        self.nodes: List[_Node] = []
        self.consumed = False

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: _Node) -> None:
        self.nodes.append(node)

    def reset(self) -> None:
        """Drops every recorded node and re-arms backward."""
        self.nodes = []
        self.consumed = False

    def backward(self, loss: "Tensor") -> None:
        """Populates ``grad`` of every leaf that requires it with d(loss)/d(leaf).

        Args:
            loss: A tensor holding a single value.

        Raises:
            BackwardError: If the loss is not scalar, the tape is empty or was
                already consumed, or the loss does not depend on any leaf.
        """
        if loss.size != 1:
            raise BackwardError(f"backward needs a scalar loss, got shape {loss.shape}")
        if self.consumed:
            raise BackwardError("backward already ran on this tape; call reset_tape() first")
        if not self.nodes:
            raise BackwardError("backward called on an empty tape")
        if loss._node is None:
            raise BackwardError("loss was not produced by a recorded operation")

        pending = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            grad = pending.pop(id(node.output), None)
            if grad is None:
                continue
            input_grads = node.backward_fn(grad)
            for tensor, input_grad in zip(node.inputs, input_grads):
                if input_grad is None or not tensor.requires_grad:
                    continue
                if tensor._node is None:
                    tensor._accumulate(input_grad)
                else:
                    key = id(tensor)
                    if key in pending:
                        pending[key] = pending[key] + input_grad
                    else:
                        pending[key] = input_grad
        self.consumed = True
        logger.debug(f"Backward pass visited {len(self.nodes)} recorded operations")


_tape = Tape()


def get_tape() -> Tape:
    """Returns the tape every operation records to."""
    return _tape


def reset_tape() -> None:
    """Clears the tape; must be called between successive backward passes."""
    _tape.reset()


def backward(loss: "Tensor") -> None:
    """Runs reverse-mode differentiation of ``loss`` over the tape."""
    _tape.backward(loss)


class Tensor:
    """n-dimensional array with an optional gradient.

    Attributes:
        data: The values, stored in the default dtype at creation time.
        grad: Same-shape accumulated gradient, or None before any backward.
        requires_grad: Whether operations on this tensor are recorded.
    """

    # Makes ``ndarray op Tensor`` dispatch to the Tensor reflected operators.
    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=_default_dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._node: Optional[_Node] = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def _accumulate(self, grad: np.ndarray) -> None:
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.data.shape:
            grad = _unbroadcast(grad, self.data.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    # Operator overloads
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)
    def __rmatmul__(self, other): return matmul(other, self)
    def __pow__(self, exponent: float): return pow(self, exponent)
    def __getitem__(self, index): return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False): return sum(self, axis, keepdims)
    def mean(self, axis=None, keepdims: bool = False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)
    def broadcast_to(self, shape): return broadcast_to(self, shape)
    def relu(self): return relu(self)
    def softplus(self): return softplus(self)
    def sigmoid(self): return sigmoid(self)
    def sin(self): return sin(self)
    def cos(self): return cos(self)
    def exp(self): return exp(self)
    def square(self): return square(self)
    def softmax(self): return softmax(self)


def as_tensor(value: ArrayLike) -> Tensor:
    """Wraps constants as non-differentiable tensors; tensors pass through."""
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(op: str, data: np.ndarray, inputs: Tuple[Tensor, ...],
            backward_fn: Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=_default_dtype)
    out.grad = None
    out.requires_grad = _grad_enabled and any(t.requires_grad for t in inputs)
    out._node = None
    if out.requires_grad:
        out._node = _Node(op, out, inputs, backward_fn)
        _tape.record(out._node)
    return out


def _broadcast_shape(op: str, *shapes: Tuple[int, ...]) -> Tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(*shapes))
    except ValueError:
        raise ShapeError(op, shapes, "axes must match or be 1") from None


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sums a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(sorted(a % ndim for a in axes))


# Elementwise binary operations

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a.shape, b.shape)

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result("add", a.data + b.data, (a, b), _backward)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a.shape, b.shape)

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result("sub", a.data - b.data, (a, b), _backward)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a.shape, b.shape)

    def _backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result("mul", a.data * b.data, (a, b), _backward)


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a.shape, b.shape)

    def _backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _result("div", a.data / b.data, (a, b), _backward)


def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _result("neg", -a.data, (a,), lambda g: (-g,))


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Matrix product with numpy semantics for 1-D operands and batch axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError("matmul", (a.shape, b.shape), "scalar operand")
    a2 = a.data if a.ndim > 1 else a.data[None, :]
    b2 = b.data if b.ndim > 1 else b.data[:, None]
    if a2.shape[-1] != b2.shape[-2]:
        raise ShapeError("matmul", (a.shape, b.shape), "inner dimensions differ")
    _broadcast_shape("matmul", a2.shape[:-2], b2.shape[:-2])

    out2 = a2 @ b2
    out_shape = list(out2.shape)
    if b.ndim == 1:
        out_shape.pop(-1)
    if a.ndim == 1:
        out_shape.pop(-1 if b.ndim == 1 else -2)

    def _backward(g):
        g2 = g.reshape(out2.shape)
        grad_a = _unbroadcast(g2 @ np.swapaxes(b2, -1, -2), a2.shape).reshape(a.shape)
        grad_b = _unbroadcast(np.swapaxes(a2, -1, -2) @ g2, b2.shape).reshape(b.shape)
        return grad_a, grad_b

    return _result("matmul", out2.reshape(out_shape), (a, b), _backward)


# Reductions and shape operations

def sum(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)

    def _backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(g, a.shape),)

    return _result("sum", a.data.sum(axis=axes, keepdims=keepdims), (a,), _backward)


def mean(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return mul(sum(a, axes, keepdims), 1.0 / count)


def reshape(a: ArrayLike, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", (a.shape, tuple(shape)), "sizes differ") from None
    return _result("reshape", data, (a,), lambda g: (g.reshape(a.shape),))


def broadcast_to(a: ArrayLike, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    if _broadcast_shape("broadcast", a.shape, shape) != shape:
        raise ShapeError("broadcast", (a.shape, shape), "target is smaller than operand")
    return _result("broadcast", np.broadcast_to(a.data, shape), (a,),
                   lambda g: (_unbroadcast(g, a.shape),))


def concat(tensors: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        same_rank = t.ndim == ndim
        if not same_rank or any(t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != axis):
            raise ShapeError("concat", (tensors[0].shape, t.shape), f"only axis {axis} may differ")
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, _backward)


def getitem(a: ArrayLike, index) -> Tensor:
    """Basic slicing or integer-array gathering; backward scatters with add."""
    a = as_tensor(a)
    parts = index if isinstance(index, tuple) else (index,)
    advanced = any(isinstance(part, (np.ndarray, list)) for part in parts)

    def _backward(g):
        full = np.zeros_like(a.data)
        if advanced:
            np.add.at(full, index, g)
        else:
            full[index] += g
        return (full,)

    return _result("slice", a.data[index], (a,), _backward)


# Elementwise unary operations

def relu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _result("relu", np.where(mask, a.data, 0), (a,), lambda g: (g * mask,))


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(a: ArrayLike) -> Tensor:
    """ln(1 + e^x), returning x itself above the overflow threshold."""
    a = as_tensor(a)
    x = a.data
    data = np.where(x > 20.0, x, np.log1p(np.exp(np.minimum(x, 20.0))))
    return _result("softplus", data, (a,), lambda g: (g * _stable_sigmoid(x),))


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    s = _stable_sigmoid(a.data)
    return _result("sigmoid", s, (a,), lambda g: (g * s * (1.0 - s),))


def sin(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _result("sin", np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def cos(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _result("cos", np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    e = np.exp(a.data)
    return _result("exp", e, (a,), lambda g: (g * e,))


def square(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _result("square", a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def pow(a: ArrayLike, exponent: float, grad_floor: Optional[float] = None) -> Tensor:  # noqa: A001
    """Raises to a constant power.

    Args:
        a: Base tensor.
        exponent: Constant exponent.
        grad_floor: When set, the derivative evaluates the base clamped below at
            this value. The forward value is left exact.
    """
    a = as_tensor(a)
    exponent = float(exponent)

    def _backward(g):
        base = a.data if grad_floor is None else np.maximum(a.data, grad_floor)
        return (g * exponent * np.power(base, exponent - 1.0),)

    return _result("pow", np.power(a.data, exponent), (a,), _backward)


def softmax(a: ArrayLike) -> Tensor:
    """Softmax over the last axis."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def _backward(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _result("softmax", s, (a,), _backward)


def norm(a: ArrayLike, axis: int = -1) -> Tensor:
    """Euclidean norm along ``axis``; zero vectors get a zero gradient."""
    return pow(sum(square(a), axis=axis), 0.5, grad_floor=1e-12)
