"""Tape-based reverse-mode differentiation over float64 numpy arrays.

Every op output is appended to the tape of its inputs in creation order, so
the tape is already topologically sorted and ``backward`` walks it once in
reverse.
"""

from __future__ import annotations

import math

import numpy as np

from .. import _kernels


class NonFiniteError(FloatingPointError):
    pass


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "tape", "node_id", "parents", "backward_fn", "name")

    def __init__(self, value, requires_grad=False, tape=None, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.tape = tape
        self.node_id = None
        self.parents = ()
        self.backward_fn = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def item(self) -> float:
        return float(self.value)


class Tape:
    """Ordered record of differentiable operations."""

    def __init__(self):
        self.nodes = []
        self.leaves = []

    def leaf(self, value, name=None) -> Tensor:
        t = Tensor(value, requires_grad=True, tape=self, name=name)
        t.node_id = len(self.nodes)
        self.nodes.append(t)
        self.leaves.append(t)
        return t

    def watch(self, params: dict) -> dict:
        """Wrap named arrays as gradient-tracking leaves."""
        return {k: self.leaf(v, name=k) for k, v in params.items()}

    def backward(self, out: Tensor) -> None:
        if out.value.size != 1:
            raise ShapeError("backward needs a scalar output")
        for t in self.nodes:
            t.grad = None
        out.grad = np.ones_like(out.value)
        for t in reversed(self.nodes[: out.node_id + 1]):
            if t.grad is None or t.backward_fn is None:
                continue
            grads = t.backward_fn(t.grad)
            for parent, g in zip(t.parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g

    def gradients(self, leaves: dict) -> dict:
        return {k: (t.grad if t.grad is not None else np.zeros_like(t.value)) for k, t in leaves.items()}


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(value, parents, backward_fn, op):
    value = np.asarray(value, dtype=np.float64)
    if not math.isfinite(value.sum()) and not np.isfinite(value).all():
        raise NonFiniteError(f"{op} produced a non-finite value")
    tape = None
    for p in parents:
        if p.requires_grad:
            tape = p.tape
            break
    out = Tensor(value, requires_grad=tape is not None, tape=tape)
    if tape is not None:
        out.parents = parents
        out.backward_fn = backward_fn
        out.node_id = len(tape.nodes)
        tape.nodes.append(out)
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    if a.value.shape == b.value.shape:
        return
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _record(a.value + b.value, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _record(a.value - b.value, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _record(a.value * b.value, (a, b),
                   lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
                   "mul")


def scale(a, s: float) -> Tensor:
    a = as_tensor(a)
    return _record(a.value * s, (a,), lambda g: (g * s,), "scale")


def matmul(a, b) -> Tensor:
    """Matrix-vector, vector-matrix or matrix-matrix product."""
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    if av.ndim not in (1, 2) or bv.ndim not in (1, 2) or av.shape[-1] != bv.shape[0] or (av.ndim == bv.ndim == 1):
        raise ShapeError(f"matmul: incompatible shapes {av.shape} and {bv.shape}")

    def back(g):
        if av.ndim == 2 and bv.ndim == 1:
            return g[:, None] * bv[None, :], av.T @ g
        if av.ndim == 1:
            return bv @ g, av[:, None] * g[None, :]
        return g @ bv.T, av.T @ g

    return _record(av @ bv, (a, b), back, "matmul")


def concat(tensors) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if any(t.value.ndim != 1 for t in tensors):
        raise ShapeError("concat expects vectors")
    bounds = np.cumsum([0] + [t.value.shape[0] for t in tensors])

    def back(g):
        return tuple(g[bounds[k]:bounds[k + 1]] for k in range(len(tensors)))

    return _record(np.concatenate([t.value for t in tensors]), tuple(tensors), back, "concat")


def stack_mean(tensors) -> Tensor:
    """Elementwise mean of equally shaped tensors."""
    tensors = [as_tensor(t) for t in tensors]
    shape = tensors[0].shape
    if any(t.shape != shape for t in tensors):
        raise ShapeError("stack_mean expects equal shapes")
    n = len(tensors)
    value = sum(t.value for t in tensors) / n
    return _record(value, tuple(tensors), lambda g: tuple(g / n for _ in range(n)), "stack_mean")


def take(a, idx) -> Tensor:
    """Row (or element) selection ``a[idx]`` with scatter-add backward."""
    a = as_tensor(a)

    def back(g):
        out = np.zeros_like(a.value)
        if isinstance(idx, (int, np.integer, slice)):
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return _record(a.value[idx], (a,), back, "take")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.value)
    return _record(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return _record(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    return _record(a.value * mask, (a,), lambda g: (g * mask,), "relu")


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):  # overflow is reported by the finite check
        y = np.exp(a.value)
    return _record(y, (a,), lambda g: (g * y,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.value <= 0):
        raise NonFiniteError("log of a non-positive value")
    return _record(np.log(a.value), (a,), lambda g: (g / a.value,), "log")


def softmax(a) -> Tensor:
    a = as_tensor(a)
    if a.value.ndim != 1:
        raise ShapeError("softmax expects a vector")
    z = a.value - a.value.max()
    e = np.exp(z)
    y = e / e.sum()
    return _record(y, (a,), lambda g: (y * (g - np.dot(g, y)),), "softmax")


def log_softmax(a) -> Tensor:
    a = as_tensor(a)
    if a.value.ndim != 1:
        raise ShapeError("log_softmax expects a vector")
    z = a.value - a.value.max()
    lse = np.log(np.exp(z).sum())
    y = z - lse
    p = np.exp(y)
    return _record(y, (a,), lambda g: (g - p * g.sum(),), "log_softmax")


def tensor_sum(a) -> Tensor:
    a = as_tensor(a)
    return _record(a.value.sum(), (a,), lambda g: (np.full_like(a.value, g),), "sum")


def tensor_mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.value.size
    return _record(a.value.mean(), (a,), lambda g: (np.full_like(a.value, g / n),), "mean")


def add_n(tensors) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    value = sum(t.value for t in tensors)
    return _record(value, tuple(tensors), lambda g: tuple(g for _ in tensors), "add_n")


def lstm_gates(z, c_prev):
    """Fused LSTM gate nonlinearity; returns (h, c) tensors.

    ``z`` is the 4H pre-activation ordered [input, forget, cell, output].
    """
    z, c_prev = as_tensor(z), as_tensor(c_prev)
    if z.value.ndim != 1 or c_prev.value.ndim != 1 or z.value.shape[0] != 4 * c_prev.value.shape[0]:
        raise ShapeError(f"lstm_gates: pre-activation {z.shape} vs cell {c_prev.shape}")
    h, c, cache = _kernels.lstm_gates_forward(z.value, c_prev.value)
    hidden = c_prev.value.shape[0]
    pair = _record(np.concatenate([h, c]), (z, c_prev), None, "lstm_gates")

    def back(g):
        return _kernels.lstm_gates_backward(g[:hidden], g[hidden:], cache)

    pair.backward_fn = back
    return take(pair, slice(0, hidden)), take(pair, slice(hidden, 2 * hidden))


def gather_concat(tables, indices) -> Tensor:
    """``concat([tables[i][indices[i]] for i])`` as a single tape entry."""
    tables = [as_tensor(t) for t in tables]
    if len(tables) != len(indices):
        raise ShapeError("one index per table required")
    width = [t.value.shape[1] for t in tables]
    bounds = np.cumsum([0] + width)
    value = np.concatenate([t.value[k] for t, k in zip(tables, indices)])

    def back(g):
        out = []
        for n, (t, k) in enumerate(zip(tables, indices)):
            d = np.zeros_like(t.value)
            d[k] = g[bounds[n]:bounds[n + 1]]
            out.append(d)
        return tuple(out)

    return _record(value, tuple(tables), back, "gather_concat")
