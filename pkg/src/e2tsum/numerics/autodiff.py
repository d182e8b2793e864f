"""Tensor-level reverse-mode automatic differentiation on top of numpy.

Every value is a float64 ndarray wrapped in a :class:`Node`.  Operations record
their parents and a closure that maps the output gradient to parent gradients;
:func:`backward` walks the graph in reverse topological order.
"""
from __future__ import annotations

import contextlib

import numpy as np

MASK_VALUE = -1e9

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Build values without recording the graph (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Node:
    __slots__ = ("value", "grad", "parents", "_backward", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, value, parents=(), backward=None, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Node(shape={self.value.shape}{label})"

    def zero_grad(self):
        self.grad = None

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __neg__ = lambda self: neg(self)
    __matmul__ = lambda self, other: matmul(self, other)
    __getitem__ = lambda self, idx: getitem(self, idx)


def parameter(value, name=None):
    """A trainable leaf."""
    return Node(np.array(value, dtype=np.float64), requires_grad=True, name=name)


def as_node(x):
    return x if isinstance(x, Node) else Node(x)


def _make(value, parents, backward):
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Node(value, parents, backward, requires_grad=True)
    return Node(value)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_node(a), as_node(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.value + b.value, (a, b), bw)


def sub(a, b):
    a, b = as_node(a), as_node(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.value - b.value, (a, b), bw)


def mul(a, b):
    a, b = as_node(a), as_node(b)

    def bw(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

    return _make(a.value * b.value, (a, b), bw)


def neg(a):
    return _make(-a.value, (a,), lambda g: (-g,))


def tanh(a):
    a = as_node(a)
    y = np.tanh(a.value)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a):
    a = as_node(a)
    # numerically stable logistic
    x = a.value
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return _make(y, (a,), lambda g: (g * y * (1.0 - y),))


def exp(a):
    a = as_node(a)
    y = np.exp(a.value)
    return _make(y, (a,), lambda g: (g * y,))


def log(a):
    a = as_node(a)
    return _make(np.log(a.value), (a,), lambda g: (g / a.value,))


# ---------------------------------------------------------------- reductions / shape

def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    a = as_node(a)
    y = a.value.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(y, (a,), bw)


def mean(a, axis=None):
    a = as_node(a)
    n = a.value.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis), 1.0 / n)


def reshape(a, shape):
    a = as_node(a)
    return _make(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a):
    a = as_node(a)
    return _make(np.swapaxes(a.value, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def getitem(a, idx):
    """Basic (non-repeating) indexing and slicing."""
    a = as_node(a)

    def bw(g):
        out = np.zeros_like(a.value)
        out[idx] += g
        return (out,)

    return _make(a.value[idx], (a,), bw)


def concat(nodes, axis=-1):
    nodes = [as_node(n) for n in nodes]
    sizes = [n.shape[axis] for n in nodes]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([n.value for n in nodes], axis=axis), tuple(nodes), bw)


def stack(nodes, axis=0):
    nodes = [as_node(n) for n in nodes]

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _make(np.stack([n.value for n in nodes], axis=axis), tuple(nodes), bw)


def take_rows(table, ids):
    """Embedding lookup: ``table[ids]`` with scatter-add backward."""
    table = as_node(table)
    ids = np.asarray(ids, dtype=np.int64)

    def bw(g):
        out = np.zeros_like(table.value)
        np.add.at(out, ids, g)
        return (out,)

    return _make(table.value[ids], (table,), bw)


def pick(a, index):
    """Select ``a[..., index[...]]`` along the last axis (used by the NLL)."""
    a = as_node(a)
    index = np.asarray(index, dtype=np.int64)[..., None]
    y = np.take_along_axis(a.value, index, axis=-1)[..., 0]

    def bw(g):
        out = np.zeros_like(a.value)
        np.put_along_axis(out, index, g[..., None], axis=-1)
        return (out,)

    return _make(y, (a,), bw)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b):
    """``a @ b`` for operands with at least two dimensions and equal batch dims."""
    a, b = as_node(a), as_node(b)

    def bw(g):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.value @ b.value, (a, b), bw)


def linear(x, weight, bias=None):
    """``x @ weight.T + bias`` with ``weight`` stored as (out, in)."""
    x, weight = as_node(x), as_node(weight)
    y = x.value @ weight.value.T
    if bias is not None:
        bias = as_node(bias)
        y = y + bias.value
    out_dim = weight.shape[0]

    def bw(g):
        gx = g @ weight.value
        g2 = g.reshape(-1, out_dim)
        gw = g2.T @ x.value.reshape(-1, weight.shape[1])
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(y, parents, bw)


# ---------------------------------------------------------------- softmax family

def softmax_array(v, axis=-1):
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0 or v.shape[axis] == 0:
        raise ValueError("empty distribution")
    z = np.exp(v - v.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def softmax(a, axis=-1):
    a = as_node(a)
    y = softmax_array(a.value, axis)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (a,), bw)


def log_softmax(a, axis=-1):
    a = as_node(a)
    v = a.value
    if v.size == 0 or v.shape[axis] == 0:
        raise ValueError("empty distribution")
    shifted = v - v.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse

    def bw(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _make(y, (a,), bw)


# ---------------------------------------------------------------- backward pass

def _topological(root):
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


def backward(loss):
    """Backpropagate from a scalar ``loss``.

    Leaf gradients accumulate into ``leaf.grad``; returns ``{name: grad}`` for
    every named leaf reached.
    """
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.value)}
    named = {}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            if node.name is not None:
                named[node.name] = node.grad
            continue
        for parent, pg in zip(node.parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return named
