"""Minimal reverse-mode differentiation over numpy arrays.

Only the operations the localization model needs are provided. Every op
returns a new :class:`Value`; ``backward`` walks the graph once in reverse
topological order and *adds* the resulting derivatives into ``.grad`` so that
repeated calls accumulate.
"""
from __future__ import annotations

import builtins
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateInputError, DimensionError, NumericalError, UsageError

WIDE = np.float64
NARROW = np.float32

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Value:
    """A differentiable array: value buffer, gradient slot and producer record."""

    __slots__ = ("data", "grad", "parents", "op", "_backward", "name")

    def __init__(self, data, parents: Sequence["Value"] = (), backward: BackwardFn | None = None,
                 op: str = "leaf", name: str | None = None, dtype=None):
        if dtype is None:
            keep = isinstance(data, np.ndarray) and data.dtype in (WIDE, NARROW)
            dtype = data.dtype if keep else WIDE
        arr = np.asarray(data, dtype=dtype)
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"non-finite value produced by {op}")
        self.data = arr
        self.grad = np.zeros_like(arr)
        self.parents = tuple(parents)
        self.op = op
        self._backward = backward
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Value(shape={self.shape}, op={self.op})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)


def as_value(x) -> Value:
    return x if isinstance(x, Value) else Value(np.asarray(x, dtype=WIDE), op="const")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    return Value(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    return Value(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)), "sub")


def mul(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    return Value(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul")


def div(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    out = a.data / b.data
    return Value(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)), "div")


def exp(x: Value) -> Value:
    with np.errstate(over="ignore"):  # overflow is reported as NumericalError below
        out = np.exp(x.data)
    return Value(out, (x,), lambda g: (g * out,), "exp")


def log(x: Value) -> Value:
    if np.any(x.data <= 0):
        raise DegenerateInputError("log of non-positive value")
    return Value(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def tanh(x: Value) -> Value:
    out = np.tanh(x.data)
    return Value(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(x: Value) -> Value:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return Value(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


# ---------------------------------------------------------------- structural

def reshape(x: Value, shape) -> Value:
    return Value(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Value, axes=None) -> Value:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inv = np.argsort(axes)
    return Value(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def take(x: Value, index) -> Value:
    """Numpy-style indexing; gradient is scattered back with ``np.add.at``."""

    def back(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return Value(x.data[index], (x,), back, "take")


def concat(parts: Sequence[Value], axis: int = 0) -> Value:
    parts = [as_value(p) for p in parts]
    if not parts:
        raise UsageError("concat of an empty list")
    ref = parts[0].shape
    ax = axis % len(ref)
    for p in parts[1:]:
        if p.ndim != len(ref) or any(p.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise DimensionError(f"cannot concat {p.shape} with {ref} along axis {axis}")
    bounds = np.cumsum([p.shape[ax] for p in parts])[:-1]
    return Value(np.concatenate([p.data for p in parts], axis=ax), parts,
                 lambda g: tuple(np.split(g, bounds, axis=ax)), "concat")


def split(x: Value, sizes: Sequence[int], axis: int = 0) -> list[Value]:
    if builtins.sum(sizes) != x.shape[axis]:
        raise DimensionError(f"split sizes {list(sizes)} do not cover extent {x.shape[axis]}")
    out, start = [], 0
    for n in sizes:
        idx = [slice(None)] * x.ndim
        idx[axis] = slice(start, start + n)
        out.append(take(x, tuple(idx)))
        start += n
    return out


# ---------------------------------------------------------------- reductions

def sum(x: Value, axis=None, keepdims: bool = False) -> Value:  # noqa: A001
    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Value(x.data.sum(axis=axis, keepdims=keepdims), (x,), back, "sum")


def mean(x: Value, axis=None, keepdims: bool = False) -> Value:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis, keepdims), 1.0 / float(n))


def max_along(x: Value, axis: int) -> tuple[Value, np.ndarray]:
    """Max along one axis; ties go to the lowest index and only the winner gets gradient."""
    if x.shape[axis] == 0:
        raise DimensionError("max over an empty axis")
    idx = np.argmax(x.data, axis=axis)
    out = np.take_along_axis(x.data, np.expand_dims(idx, axis), axis).squeeze(axis)

    def back(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis)
        return (full,)

    return Value(out, (x,), back, f"max:{axis % x.ndim}"), idx


def max_over_locations(x: Value) -> tuple[Value, int]:
    """Maximum of an H x W map and its flat index."""
    if x.ndim != 2 or x.data.size == 0:
        raise DimensionError(f"expected a non-empty H x W map, got shape {x.shape}")
    m, idx = max_along(reshape(x, (-1,)), 0)
    return m, int(idx)


def logsumexp(x: Value, axis: int = -1) -> Value:
    m = np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (np.log(s) + m).squeeze(axis)
    p = e / s
    return Value(out, (x,), lambda g: (np.expand_dims(g, axis) * p,), "logsumexp")


def softmax(x: Value, axis: int = -1) -> Value:
    if not -x.ndim <= axis < x.ndim:
        raise UsageError(f"axis {axis} out of range for rank {x.ndim}")
    e = np.exp(x.data - np.max(x.data, axis=axis, keepdims=True))
    p = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return Value(p, (x,), back, "softmax")


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Value:
    """Matrix product, batched over leading axes like ``np.matmul``."""
    a, b = as_value(a), as_value(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Value(np.matmul(a.data, b.data), (a, b), back, "matmul")


def l2_normalize(x: Value, axis: int = -1) -> Value:
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    if np.any(norm == 0.0):
        raise DegenerateInputError("cannot normalize a zero-norm vector")
    y = x.data / norm

    def back(g):
        return ((g - y * (g * y).sum(axis=axis, keepdims=True)) / norm,)

    return Value(y, (x,), back, "l2_normalize")


def cosine_similarity(u, v) -> Value:
    u, v = as_value(u), as_value(v)
    if u.shape != v.shape:
        raise DimensionError(f"cosine_similarity shape mismatch: {u.shape} vs {v.shape}")
    return sum(mul(l2_normalize(u, -1), l2_normalize(v, -1)), axis=-1)


def bce_with_logits(logits: Value, targets: np.ndarray) -> Value:
    """Mean binary cross-entropy, evaluated in the overflow-free form."""
    x = logits.data
    y = np.asarray(targets, dtype=x.dtype)
    if y.shape != x.shape:
        raise DimensionError(f"targets {y.shape} vs logits {x.shape}")
    per = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    p = 0.5 * (1.0 + np.tanh(0.5 * x))
    return Value(per.mean(), (logits,), lambda g: (g * (p - y) / x.size,), "bce")


# ---------------------------------------------------------------- backward

def _topological(root: Value) -> list[Value]:
    order: list[Value] = []
    seen: set[int] = set()
    stack: list[tuple[Value, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Value) -> None:
    """Accumulate d root / d node into ``.grad`` of every node reachable from ``root``."""
    if root.data.size != 1:
        raise UsageError(f"backward needs a scalar root, got shape {root.shape}")
    order = _topological(root)
    upstream: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = upstream.pop(id(node), None)
        if g is None:
            continue
        node.grad = node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node.parents, node._backward(g)):
            if pg is None:
                continue
            key = id(parent)
            upstream[key] = upstream[key] + pg if key in upstream else pg
