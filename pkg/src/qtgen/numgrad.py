"""Dense float64 tensors with reverse-mode differentiation.

Every value lives in a :class:`Node` wrapping a numpy array.  Operations are
plain functions that build a new node and register a closure which, given the
gradient of the output, accumulates into the gradients of the inputs.  Calling
:func:`backward` on a scalar node walks the graph in reverse topological order.

Leading axes are treated as batch axes by most ops, so the same code runs a
single example or a padded mini-batch.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

DTYPE = np.float64

_grad_enabled = True


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block (inference / finite differences)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Node:
    __slots__ = ("value", "_grad", "parents", "_backward", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: str = ""):
        self.value = np.asarray(value, dtype=DTYPE)
        self._grad: Optional[np.ndarray] = None
        self.parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            return np.zeros_like(self.value)
        return self._grad

    def zero_grad(self) -> None:
        self._grad = None

    def _accumulate(self, delta: np.ndarray) -> None:
        # never in place: deltas may alias arrays held elsewhere in the graph
        if self._grad is None:
            self._grad = delta
        else:
            self._grad = self._grad + delta

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Node{label}(shape={self.value.shape})"

    def __add__(self, other):
        return add(self, _lift(other))

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __matmul__(self, other):
        return matmul(self, other)


def constant(value) -> Node:
    return Node(value, requires_grad=False)


def parameter(value, name: str = "") -> Node:
    return Node(np.array(value, dtype=DTYPE), requires_grad=True, name=name)


def _lift(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def _make(value: np.ndarray, parents: Sequence[Node], backward) -> Node:
    out = Node.__new__(Node)
    out.value = value
    out._grad = None
    out.name = ""
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out.parents = tuple(parents)
        out._backward = backward
    else:
        out.parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(a: Node, b: Node, op: str) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot combine shapes {a.shape} and {b.shape}") from None


# --------------------------------------------------------------------------
# elementwise


def add(a: Node, b: Node) -> Node:
    _check_broadcast(a, b, "add")
    out_value = a.value + b.value

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(out_value, (a, b), backward)


def sub(a: Node, b: Node) -> Node:
    _check_broadcast(a, b, "sub")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(a.value - b.value, (a, b), backward)


def mul(a: Node, b: Node) -> Node:
    _check_broadcast(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.value, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.value, b.shape))

    return _make(a.value * b.value, (a, b), backward)


def scale(a: Node, c: float) -> Node:
    def backward(g):
        a._accumulate(g * c)

    return _make(a.value * c, (a,), backward)


def tanh(a: Node) -> Node:
    y = np.tanh(a.value)

    def backward(g):
        a._accumulate(g * (1.0 - y * y))

    return _make(y, (a,), backward)


def _logistic(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logistic(a: Node) -> Node:
    y = _logistic(a.value)

    def backward(g):
        a._accumulate(g * y * (1.0 - y))

    return _make(y, (a,), backward)


def log(a: Node, floor: float = 0.0) -> Node:
    """Natural log; entries below ``floor`` are clamped and pass no gradient."""
    clamped = np.maximum(a.value, floor) if floor > 0 else a.value
    y = np.log(clamped)

    def backward(g):
        live = a.value >= floor if floor > 0 else True
        a._accumulate(np.where(live, g / clamped, 0.0))

    return _make(y, (a,), backward)


def mix(gate: Node, a: Node, b: Node) -> Node:
    """Convex combination ``gate * a + (1 - gate) * b``; gate broadcasts."""
    _check_broadcast(a, b, "mix")
    _check_broadcast(gate, a, "mix")
    gv = gate.value

    def backward(g):
        if gate.requires_grad:
            gate._accumulate(_unbroadcast(g * (a.value - b.value), gate.shape))
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * gv, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * (1.0 - gv), b.shape))

    return _make(gv * a.value + (1.0 - gv) * b.value, (gate, a, b), backward)


def blend(keep_new: np.ndarray, new: Node, old: Node) -> Node:
    """Masked state update: rows where ``keep_new`` is 1 take ``new``, others ``old``.

    ``keep_new`` is a constant 0/1 array broadcastable against the operands.
    """
    m = np.asarray(keep_new, dtype=DTYPE)

    def backward(g):
        if new.requires_grad:
            new._accumulate(_unbroadcast(g * m, new.shape))
        if old.requires_grad:
            old._accumulate(_unbroadcast(g * (1.0 - m), old.shape))

    return _make(m * new.value + (1.0 - m) * old.value, (new, old), backward)


# --------------------------------------------------------------------------
# linear algebra and reshaping


def matmul(a: Node, b: Node) -> Node:
    """``a[..., k] @ b[k, n]``; leading axes of ``a`` are batch axes."""
    if b.value.ndim != 2 or a.value.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ for {a.shape} and {b.shape}")
    out_value = a.value @ b.value

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.value.T)
        if b.requires_grad:
            a2 = a.value.reshape(-1, a.shape[-1])
            b._accumulate(a2.T @ g.reshape(-1, b.shape[1]))

    return _make(out_value, (a, b), backward)


def concat(nodes: Sequence[Node], axis: int = -1) -> Node:
    if not nodes:
        raise ShapeError("concat: no operands")
    try:
        out_value = np.concatenate([n.value for n in nodes], axis=axis)
    except ValueError:
        shapes = [n.shape for n in nodes]
        raise ShapeError(f"concat: incompatible shapes {shapes}") from None
    sizes = [n.shape[axis] for n in nodes]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for n, lo, hi in zip(nodes, bounds[:-1], bounds[1:]):
            if n.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                n._accumulate(g[tuple(idx)])

    return _make(out_value, nodes, backward)


def stack(nodes: Sequence[Node], axis: int = 0) -> Node:
    out_value = np.stack([n.value for n in nodes], axis=axis)

    def backward(g):
        parts = np.moveaxis(g, axis, 0)
        for n, part in zip(nodes, parts):
            if n.requires_grad:
                n._accumulate(part)

    return _make(out_value, nodes, backward)


def slice_last(a: Node, start: int, stop: int) -> Node:
    """Columns ``start:stop`` of the last axis."""
    out_value = a.value[..., start:stop]

    def backward(g):
        full = np.zeros_like(a.value)
        full[..., start:stop] = g
        a._accumulate(full)

    return _make(out_value, (a,), backward)


def reshape(a: Node, shape: Sequence[int]) -> Node:
    in_shape = a.shape

    def backward(g):
        a._accumulate(g.reshape(in_shape))

    return _make(a.value.reshape(shape), (a,), backward)


def pad_last(a: Node, size: int) -> Node:
    """Zero-pad the last axis up to ``size`` columns."""
    n = a.shape[-1]
    if size < n:
        raise ShapeError(f"pad_last: cannot pad width {n} down to {size}")
    if size == n:
        return a
    out_value = np.zeros(a.shape[:-1] + (size,), dtype=DTYPE)
    out_value[..., :n] = a.value

    def backward(g):
        a._accumulate(g[..., :n])

    return _make(out_value, (a,), backward)


# --------------------------------------------------------------------------
# indexing


def take_rows(table: Node, ids) -> Node:
    """Embedding lookup: ``table[ids]`` for an integer array of any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"take_rows: id out of range for table with {table.shape[0]} rows")

    def backward(g):
        full = np.zeros_like(table.value)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        table._accumulate(full)

    return _make(table.value[ids], (table,), backward)


def pick(a: Node, index) -> Node:
    """Per-row selection along axis 1: ``out[b] = a[b, index[b]]``."""
    index = np.asarray(index, dtype=np.int64)
    rows = np.arange(a.shape[0])

    def backward(g):
        full = np.zeros_like(a.value)
        np.add.at(full, (rows, index), g)
        a._accumulate(full)

    return _make(a.value[rows, index], (a,), backward)


def scatter_add(a: Node, index, size: int) -> Node:
    """``out[b, index[b, t]] += a[b, t]`` into a fresh ``[B, size]`` array."""
    index = np.asarray(index, dtype=np.int64)
    if a.shape != index.shape:
        raise ShapeError(f"scatter_add: values {a.shape} vs index {index.shape}")
    rows = np.broadcast_to(np.arange(a.shape[0])[:, None], index.shape)
    out_value = np.zeros((a.shape[0], size), dtype=DTYPE)
    np.add.at(out_value, (rows, index), a.value)

    def backward(g):
        a._accumulate(g[rows, index])

    return _make(out_value, (a,), backward)


# --------------------------------------------------------------------------
# reductions and normalisers


def sum(a: Node, axis=None, keepdims: bool = False) -> Node:  # noqa: A001
    out_value = np.sum(a.value, axis=axis, keepdims=keepdims)
    in_shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, in_shape).copy())

    return _make(np.asarray(out_value, dtype=DTYPE), (a,), backward)


def mean(a: Node, axis=None) -> Node:
    count = a.value.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis), 1.0 / count)


def softmax(a: Node, mask=None) -> Node:
    """Softmax over the last axis; entries where ``mask`` is False get probability 0."""
    x = a.value
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        x = np.where(mask, x, -np.inf)
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=-1, keepdims=True)

    def backward(g):
        a._accumulate(y * (g - np.sum(g * y, axis=-1, keepdims=True)))

    return _make(y, (a,), backward)


def renormalize(a: Node) -> Node:
    """Divide nonnegative entries by their last-axis sum."""
    total = np.sum(a.value, axis=-1, keepdims=True)
    y = a.value / total

    def backward(g):
        a._accumulate((g - np.sum(g * y, axis=-1, keepdims=True)) / total)

    return _make(y, (a,), backward)


def weighted_sum(weights: Node, states: Node) -> Node:
    """``out[b] = sum_t weights[b, t] * states[b, t, :]``."""
    if weights.shape != states.shape[:2]:
        raise ShapeError(f"weighted_sum: weights {weights.shape} vs states {states.shape}")
    out_value = np.einsum("bt,btd->bd", weights.value, states.value)

    def backward(g):
        if weights.requires_grad:
            weights._accumulate(np.einsum("bd,btd->bt", g, states.value))
        if states.requires_grad:
            states._accumulate(weights.value[:, :, None] * g[:, None, :])

    return _make(out_value, (weights, states), backward)


def nll(probs: Node, target, floor: float = 1e-12) -> Node:
    """``-log(max(probs[b, target[b]], floor))`` per row."""
    target = np.asarray(target, dtype=np.int64)
    rows = np.arange(probs.shape[0])
    p = probs.value[rows, target]
    clamped = np.maximum(p, floor)

    def backward(g):
        full = np.zeros_like(probs.value)
        full[rows, target] = np.where(p >= floor, -g / clamped, 0.0)
        probs._accumulate(full)

    return _make(-np.log(clamped), (probs,), backward)


# --------------------------------------------------------------------------
# recurrent cell


class LSTMWeights:
    """Gate weights for one LSTM: ``W`` maps ``[x; h]`` to the four gates (i, f, g, o)."""

    __slots__ = ("W", "b")

    def __init__(self, W: Node, b: Node):
        self.W = W
        self.b = b

    @property
    def hidden_dim(self) -> int:
        return self.W.shape[1] // 4

    @property
    def input_dim(self) -> int:
        return self.W.shape[0] - self.hidden_dim


def _lstm_fused(x: Node, h: Node, c: Node, W: Node, b: Node) -> Node:
    H = W.shape[1] // 4
    xh = np.concatenate([x.value, h.value], axis=-1)
    z = xh @ W.value + b.value
    i = _logistic(z[..., :H])
    f = _logistic(z[..., H:2 * H])
    gc = np.tanh(z[..., 2 * H:3 * H])
    o = _logistic(z[..., 3 * H:])
    c_new = f * c.value + i * gc
    tc = np.tanh(c_new)
    h_new = o * tc
    d_in = x.shape[-1]

    def backward(g):
        gh = g[..., :H]
        gcell = g[..., H:] + gh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                gcell * gc * i * (1.0 - i),
                gcell * c.value * f * (1.0 - f),
                gcell * i * (1.0 - gc * gc),
                gh * tc * o * (1.0 - o),
            ],
            axis=-1,
        )
        if W.requires_grad:
            W._accumulate(xh.reshape(-1, xh.shape[-1]).T @ dz.reshape(-1, 4 * H))
        if b.requires_grad:
            b._accumulate(dz.reshape(-1, 4 * H).sum(axis=0))
        dxh = dz @ W.value.T
        if x.requires_grad:
            x._accumulate(dxh[..., :d_in])
        if h.requires_grad:
            h._accumulate(dxh[..., d_in:])
        if c.requires_grad:
            c._accumulate(gcell * f)

    return _make(np.concatenate([h_new, c_new], axis=-1), (x, h, c, W, b), backward)


def lstm_cell(x: Node, h_prev: Node, c_prev: Node, weights: LSTMWeights):
    """One LSTM step; returns ``(h, c)``.

    Gates are computed from ``[x; h_prev] @ W + b`` in the order input,
    forget, candidate, output.
    """
    H = weights.hidden_dim
    if weights.W.shape[0] != x.shape[-1] + H or weights.b.shape != (4 * H,):
        raise ShapeError(
            f"lstm_cell: input {x.shape} / hidden {H} do not fit W {weights.W.shape}, b {weights.b.shape}"
        )
    if h_prev.shape[-1] != H or c_prev.shape[-1] != H:
        raise ShapeError(f"lstm_cell: state shapes {h_prev.shape}, {c_prev.shape} vs hidden {H}")
    both = _lstm_fused(x, h_prev, c_prev, weights.W, weights.b)
    return slice_last(both, 0, H), slice_last(both, H, 2 * H)


# --------------------------------------------------------------------------
# graph traversal


def _topo_order(root: Node) -> list:
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(node) into ``grad`` of every reachable node."""
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    # interior nodes hold only this pass's gradient; leaves keep accumulating
    for node in order:
        if node._backward is not None:
            node._grad = None
    loss._accumulate(np.ones_like(loss.value))
    for node in reversed(order):
        if node._backward is not None and node._grad is not None:
            node._backward(node._grad)


def zero_grad(nodes: Iterable[Node]) -> None:
    for n in nodes:
        n.zero_grad()
