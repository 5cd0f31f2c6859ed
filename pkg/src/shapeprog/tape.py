"""Reverse-mode automatic differentiation over numpy arrays.

The executor pipeline (lowering, distance fields, surface sampling, losses) is
written against the helpers in this module. Each helper accepts plain numpy
arrays or :class:`Var` nodes and dispatches accordingly: plain inputs run
straight numpy with no tape overhead, Var inputs additionally record the
vector-Jacobian product needed by :func:`backward`. Because the taped forward
pass executes the exact same numpy calls as the plain path, the two produce
bit-identical values.

Discrete choices (branch selection in ``where``, gather indices in ``take`` /
``min_reduce``) are taken from evaluated values and treated as constants of
the evaluation point, which is the usual subgradient convention for min/max
compositions.
"""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np

__all__ = [
    "Var",
    "value_of",
    "backward",
    "absolute",
    "concatenate",
    "cos",
    "hinge",
    "matmul",
    "mean",
    "min_reduce",
    "norm",
    "sin",
    "sqrt",
    "sqrt0",
    "stack",
    "take",
    "transpose",
    "where",
    "add",
    "sub",
    "mul",
    "div",
    "power",
    "asum",
]


class Var:
    """A float64 array together with the tape entry that produced it."""

    __slots__ = ("value", "grad", "_parents", "_vjp")

    # Make numpy defer binary ops to our reflected dunders instead of trying
    # to broadcast over the object.
    __array_ufunc__ = None

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = tuple(parents)
        self._vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Var({self.value!r})"

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        xv = self.value
        out = xv[key]

        def vjp(g):
            full = np.zeros_like(xv)
            # Basic slicing never aliases the same element twice, so += is a
            # correct scatter. Integer-array gathers go through `take`.
            full[key] += g
            return (full,)

        return Var(out, (self,), vjp)


def value_of(x) -> np.ndarray:
    """Evaluated array behind ``x`` (identity for plain arrays)."""
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _is_var(*xs) -> bool:
    return any(isinstance(x, Var) for x in xs)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape``, undoing numpy broadcasting."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _node(out, links):
    """Build a Var whose parents are the Var operands in ``links``.

    ``links`` is a sequence of (operand, pullback) pairs; non-Var operands are
    dropped (constants need no gradient).
    """
    parents = tuple(p for p, _ in links if isinstance(p, Var))
    pullbacks = tuple(fn for p, fn in links if isinstance(p, Var))

    def vjp(g):
        return tuple(fn(g) for fn in pullbacks)

    return Var(out, parents, vjp)


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b):
    if not _is_var(a, b):
        return np.add(a, b)
    av, bv = value_of(a), value_of(b)
    out = av + bv
    return _node(out, [
        (a, lambda g: _unbroadcast(g, av.shape)),
        (b, lambda g: _unbroadcast(g, bv.shape)),
    ])


def sub(a, b):
    if not _is_var(a, b):
        return np.subtract(a, b)
    av, bv = value_of(a), value_of(b)
    out = av - bv
    return _node(out, [
        (a, lambda g: _unbroadcast(g, av.shape)),
        (b, lambda g: _unbroadcast(-g, bv.shape)),
    ])


def mul(a, b):
    if not _is_var(a, b):
        return np.multiply(a, b)
    av, bv = value_of(a), value_of(b)
    out = av * bv
    return _node(out, [
        (a, lambda g: _unbroadcast(g * bv, av.shape)),
        (b, lambda g: _unbroadcast(g * av, bv.shape)),
    ])


def div(a, b):
    if not _is_var(a, b):
        return np.divide(a, b)
    av, bv = value_of(a), value_of(b)
    out = av / bv
    return _node(out, [
        (a, lambda g: _unbroadcast(g / bv, av.shape)),
        (b, lambda g: _unbroadcast(-g * av / (bv * bv), bv.shape)),
    ])


def power(x, exponent):
    """``x ** exponent`` for a constant real exponent."""
    exponent = float(exponent)
    if not _is_var(x):
        return np.power(x, exponent)
    xv = x.value
    out = np.power(xv, exponent)
    return _node(out, [(x, lambda g: g * exponent * np.power(xv, exponent - 1.0))])


def sqrt(x):
    if not _is_var(x):
        return np.sqrt(x)
    out = np.sqrt(x.value)
    return _node(out, [(x, lambda g: g / (2.0 * out))])


def sqrt0(x):
    """Square root whose derivative is taken as 0 at x == 0.

    Distances are sqrt of a sum of hinge terms; inside a shape all hinges are
    exactly zero and the true one-sided derivative of the composite is zero,
    but the naive chain rule produces 0 * inf. This variant pins it.
    """
    if not _is_var(x):
        return np.sqrt(x)
    xv = x.value
    out = np.sqrt(xv)

    def pull(g):
        result = np.zeros_like(out)
        np.divide(g, 2.0 * out, out=result, where=xv > 0.0)
        return result

    return _node(out, [(x, pull)])


def sin(x):
    if not _is_var(x):
        return np.sin(x)
    xv = x.value
    return _node(np.sin(xv), [(x, lambda g: g * np.cos(xv))])


def cos(x):
    if not _is_var(x):
        return np.cos(x)
    xv = x.value
    return _node(np.cos(xv), [(x, lambda g: -g * np.sin(xv))])


def absolute(x):
    if not _is_var(x):
        return np.abs(x)
    xv = x.value
    return _node(np.abs(xv), [(x, lambda g: g * np.sign(xv))])


def hinge(x):
    """max(0, x) with the outward one-sided derivative at the boundary."""
    if not _is_var(x):
        return np.maximum(x, 0.0)
    xv = x.value
    return _node(np.maximum(xv, 0.0), [(x, lambda g: g * (xv >= 0.0))])


def where(cond, a, b):
    """Branch on an evaluated boolean mask; no gradient flows through cond."""
    cond = np.asarray(cond, dtype=bool)
    if not _is_var(a, b):
        return np.where(cond, a, b)
    av, bv = value_of(a), value_of(b)
    out = np.where(cond, av, bv)
    return _node(out, [
        (a, lambda g: _unbroadcast(np.where(cond, g, 0.0), av.shape)),
        (b, lambda g: _unbroadcast(np.where(cond, 0.0, g), bv.shape)),
    ])


# ---------------------------------------------------------------------------
# reductions and reshaping


def asum(x, axis=None):
    """Sum (named to avoid shadowing the builtin)."""
    if not _is_var(x):
        return np.sum(x, axis=axis)
    xv = x.value
    out = np.sum(xv, axis=axis)

    def pull(g):
        if axis is None:
            return np.broadcast_to(g, xv.shape).astype(np.float64)
        g = np.expand_dims(g, axis)
        return np.broadcast_to(g, xv.shape).astype(np.float64)

    return _node(out, [(x, pull)])


def mean(x, axis=None):
    if not _is_var(x):
        return np.mean(x, axis=axis)
    xv = x.value
    count = xv.size if axis is None else xv.shape[axis]
    return div(asum(x, axis=axis), float(count))


def norm(x, axis=-1):
    """Euclidean norm along ``axis`` (derivative pinned to 0 at the origin)."""
    return sqrt0(asum(mul(x, x), axis=axis))


def stack(parts: Sequence[Any], axis: int = 0):
    if not _is_var(*parts):
        return np.stack(parts, axis=axis)
    values = [value_of(p) for p in parts]
    out = np.stack(values, axis=axis)

    def link(i, p):
        return (p, lambda g: np.take(g, i, axis=axis))

    return _node(out, [link(i, p) for i, p in enumerate(parts)])


def concatenate(parts: Sequence[Any], axis: int = 0):
    if not _is_var(*parts):
        return np.concatenate(parts, axis=axis)
    values = [value_of(p) for p in parts]
    out = np.concatenate(values, axis=axis)
    offsets = np.cumsum([0] + [v.shape[axis] for v in values])

    def link(i, p):
        lo, hi = offsets[i], offsets[i + 1]

        def pull(g):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            return g[tuple(index)]

        return (p, pull)

    return _node(out, [link(i, p) for i, p in enumerate(parts)])


def transpose(x):
    if not _is_var(x):
        return np.transpose(x)
    return _node(np.transpose(x.value), [(x, lambda g: np.transpose(g))])


def matmul(a, b):
    if not _is_var(a, b):
        return np.matmul(a, b)
    av, bv = value_of(a), value_of(b)
    out = np.matmul(av, bv)
    if av.ndim == 2 and bv.ndim == 2:
        links = [(a, lambda g: g @ bv.T), (b, lambda g: av.T @ g)]
    elif av.ndim == 2 and bv.ndim == 1:
        links = [(a, lambda g: np.outer(g, bv)), (b, lambda g: av.T @ g)]
    elif av.ndim == 1 and bv.ndim == 2:
        links = [(a, lambda g: bv @ g), (b, lambda g: np.outer(av, g))]
    elif av.ndim == 1 and bv.ndim == 1:
        links = [(a, lambda g: g * bv), (b, lambda g: g * av)]
    else:
        raise ValueError(f"unsupported matmul ranks {av.ndim} @ {bv.ndim}")
    return _node(out, links)


def take(x, indices, axis: int = 0):
    """Gather rows by an integer index array (repeats allowed)."""
    indices = np.asarray(indices)
    if not _is_var(x):
        return np.take(x, indices, axis=axis)
    xv = x.value
    out = np.take(xv, indices, axis=axis)

    def pull(g):
        full = np.zeros_like(xv)
        if axis == 0:
            np.add.at(full, indices, g)
        else:
            moved = np.moveaxis(full, axis, 0)
            np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return full

    return _node(out, [(x, pull)])


def min_reduce(x, axis: int = 0):
    """Minimum along ``axis`` via argmin gather (fixed-selection gradient)."""
    xv = value_of(x)
    idx = np.expand_dims(np.argmin(xv, axis=axis), axis)
    picked = np.take_along_axis(xv, idx, axis=axis)
    out = np.squeeze(picked, axis=axis)
    if not _is_var(x):
        return out

    def pull(g):
        full = np.zeros_like(xv)
        np.put_along_axis(full, idx, np.expand_dims(g, axis), axis=axis)
        return full

    return _node(out, [(x, pull)])


# ---------------------------------------------------------------------------
# backward pass


def backward(out: Var) -> None:
    """Accumulate d(out)/d(node) into ``.grad`` of every reachable Var.

    ``out`` must be scalar-shaped. Existing ``.grad`` values on the graph are
    reset first, so a Var may be reused across evaluations.
    """
    if not isinstance(out, Var):
        raise TypeError("backward() needs a Var output")
    order = _topological(out)
    for node in order:
        node.grad = None
    out.grad = np.ones_like(out.value)
    for node in reversed(order):
        if node.grad is None or node._vjp is None:
            continue
        for parent, contribution in zip(node._parents, node._vjp(node.grad)):
            contribution = np.asarray(contribution, dtype=np.float64)
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.value)
            parent.grad += contribution


def _topological(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order
