"""
Dense float64 tensor with a recorded computation graph

Every operation on tensors that require gradients records its parents and a
closure mapping the output gradient to parent gradients. ``backward`` walks
the graph once in reverse topological order.
"""
import logging
import threading
from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from xlpolicy.errors import ContractError, ShapeError, StateError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    """Whether new operations record the computation graph on this thread"""
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """
    Disable graph recording for the enclosed block (inference, benchmarks,
    finite differences).
    """
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``"""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


class Tensor:
    """
    Dense n-dimensional float64 array participating in gradient tracking.

    Attributes:
        data: row-major float64 values
        requires_grad: whether gradients flow into this tensor
        grad: gradient buffer populated by ``backward`` (same shape as data)
    """

    # numpy defers binary operators to Tensor when a Tensor is involved
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None
        self._op = ""

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def detach(self) -> "Tensor":
        """Same values, cut from the graph"""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        op = f", op={self._op}" if self._op else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{op})"

    # ------------------------------------------------------------------
    # Reverse-mode gradient
    # ------------------------------------------------------------------

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self) -> None:
        """
        Populate ``grad`` on every reachable tensor that requires gradients.

        Raises:
            ContractError: loss is not a finite scalar, or nothing requires grad
            StateError: a reachable leaf still holds a gradient from an earlier
                backward (call ``zero_grad`` first; gradients never accumulate
                silently across calls)
        """
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.is_finite():
            raise ContractError(f"backward() needs a finite loss, got {self.data!r}")
        if not self.requires_grad:
            raise ContractError("loss does not depend on any tensor that requires grad")

        order = self._topological_order()
        stale = [node for node in order if node._backward is None and node.grad is not None]
        if stale:
            raise StateError(
                f"{len(stale)} leaf tensor(s) already hold gradients; "
                f"call zero_grad() before running backward() again"
            )

        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node._backward is None:
                node.grad = np.array(grad, dtype=np.float64)
                continue
            node.grad = grad
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + parent_grad if key in pending else parent_grad

    # ------------------------------------------------------------------
    # Arithmetic
    # ------------------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            return (
                _unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(g, b.shape) if b.requires_grad else None,
            )

        return _result(a.data + b.data, (a, b), "add", backward)

    def __radd__(self, other) -> "Tensor":
        return as_tensor(other) + self

    def __sub__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            return (
                _unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(-g, b.shape) if b.requires_grad else None,
            )

        return _result(a.data - b.data, (a, b), "sub", backward)

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) - self

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            return (
                _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
            )

        return _result(a.data * b.data, (a, b), "mul", backward)

    def __rmul__(self, other) -> "Tensor":
        return as_tensor(other) * self

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            return (
                _unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None,
            )

        return _result(a.data / b.data, (a, b), "div", backward)

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __neg__(self) -> "Tensor":
        return _result(-self.data, (self,), "neg", lambda g: (-g,))

    def __pow__(self, exponent: float) -> "Tensor":
        if isinstance(exponent, Tensor):
            raise ContractError("tensor exponents are not supported")
        x = self

        def backward(g):
            return (g * exponent * np.power(x.data, exponent - 1),)

        return _result(np.power(x.data, exponent), (x,), "pow", backward)

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    # ------------------------------------------------------------------
    # Reductions and shape manipulation
    # ------------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        x = self
        axes = _normalize_axes(axis, x.ndim)

        def backward(g):
            if not keepdims:
                g = np.expand_dims(g, axes)
            return (np.broadcast_to(g, x.shape),)

        return _result(x.data.sum(axis=axes, keepdims=keepdims), (x,), "sum", backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        axes = _normalize_axes(axis, self.ndim)
        count = int(np.prod([self.shape[a] for a in axes])) if axes else 1
        return self.sum(axis=axes, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        x = self
        return _result(x.data.reshape(shape), (x,), "reshape", lambda g: (g.reshape(x.shape),))

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return _result(self.data.transpose(axes), (self,), "transpose", lambda g: (g.transpose(inverse),))

    def __getitem__(self, index) -> "Tensor":
        x = self
        basic = _is_basic_index(index)

        def backward(g):
            full = np.zeros_like(x.data)
            if basic:
                full[index] = g
            else:
                np.add.at(full, index, g)
            return (full,)

        return _result(x.data[index], (x,), "getitem", backward)

    def take(self, flat_index: np.ndarray) -> "Tensor":
        """
        Gather by flat (row-major) indices; output has the index array's shape.

        Backward scatters with a bincount so repeated indices accumulate.
        """
        x = self
        flat_index = np.asarray(flat_index, dtype=np.int64)

        def backward(g):
            scattered = np.bincount(flat_index.ravel(), weights=g.ravel(), minlength=x.size)
            return (scattered.reshape(x.shape),)

        return _result(x.data.reshape(-1)[flat_index], (x,), "take", backward)

    # ------------------------------------------------------------------
    # Elementwise functions
    # ------------------------------------------------------------------

    def tanh(self) -> "Tensor":
        y = np.tanh(self.data)
        return _result(y, (self,), "tanh", lambda g: (g * (1.0 - y * y),))

    def sigmoid(self) -> "Tensor":
        y = 0.5 * (1.0 + np.tanh(0.5 * self.data))
        return _result(y, (self,), "sigmoid", lambda g: (g * y * (1.0 - y),))

    def exp(self) -> "Tensor":
        y = np.exp(self.data)
        return _result(y, (self,), "exp", lambda g: (g * y,))

    def log(self) -> "Tensor":
        x = self
        return _result(np.log(x.data), (x,), "log", lambda g: (g / x.data,))

    def clip(self, low: float, high: float) -> "Tensor":
        x = self
        inside = (x.data >= low) & (x.data <= high)
        return _result(np.clip(x.data, low, high), (x,), "clip", lambda g: (g * inside,))


# ----------------------------------------------------------------------
# Graph construction helpers
# ----------------------------------------------------------------------


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data) -> Tensor:
    """Trainable leaf tensor (owns a copy of ``data``)"""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _result(data: np.ndarray, parents: Tuple[Tensor, ...], op: str, backward: BackwardFn) -> Tensor:
    track = is_grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        out._parents = parents
        out._backward = backward
        out._op = op
    return out


def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, (int, np.integer)):
        axis = (axis,)
    return tuple(sorted(int(a) % ndim for a in axis))


# ----------------------------------------------------------------------
# Multi-input operations
# ----------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """
    Matrix product over the last two axes; leading (batch) axes must match.

    Raises:
        ShapeError: inner dimensions or batch axes disagree
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        return (
            g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None,
            np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None,
        )

    return _result(a.data @ b.data, (a, b), "matmul", backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, "concat", backward)


def where(condition: np.ndarray, a, b) -> Tensor:
    """Elementwise select; ``condition`` is a constant boolean array"""
    a, b = as_tensor(a), as_tensor(b)
    condition = np.asarray(condition, dtype=bool)

    def backward(g):
        return (
            _unbroadcast(np.where(condition, g, 0.0), a.shape) if a.requires_grad else None,
            _unbroadcast(np.where(condition, 0.0, g), b.shape) if b.requires_grad else None,
        )

    return _result(np.where(condition, a.data, b.data), (a, b), "where", backward)


def minimum(a, b) -> Tensor:
    """Elementwise minimum; ties route the gradient to ``a``"""
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data

    def backward(g):
        return (
            _unbroadcast(np.where(pick_a, g, 0.0), a.shape) if a.requires_grad else None,
            _unbroadcast(np.where(pick_a, 0.0, g), b.shape) if b.requires_grad else None,
        )

    return _result(np.minimum(a.data, b.data), (a, b), "minimum", backward)
