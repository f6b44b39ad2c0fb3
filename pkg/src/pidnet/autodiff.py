"""Reverse-mode automatic differentiation over numpy arrays.

A ``Var`` wraps a float64 ndarray and remembers how it was produced; calling
``backward()`` on a scalar output replays the recording in reverse
topological order, accumulating vector-Jacobian products into each node's
``grad``. The primitive set is exactly what the sequence model needs:
broadcast arithmetic, matmul, reductions, basic slicing, concatenation,
padding, a leaky first-order recurrence, and a handful of elementwise
nonlinearities. Tensors follow a (..., channels, time) layout; leading batch
dimensions broadcast through every primitive.

Gradients are only recorded while the module-level switch is on; wrap
finite-difference probes and evaluation passes in ``no_grad()`` to skip the
tape entirely.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf as _erf

_GRAD_ENABLED = [True]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class no_grad:
    """Context manager disabling tape recording inside its body."""

    def __enter__(self):
        self._prev = _GRAD_ENABLED[0]
        _GRAD_ENABLED[0] = False

    def __exit__(self, *exc):
        _GRAD_ENABLED[0] = self._prev
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED[0]


class Var:
    """One node of the tape: a value, a lazily allocated grad, and a vjp."""

    __slots__ = ("value", "grad", "_parents", "_vjp")

    def __init__(self, value, parents=(), vjp=None):
        self.value = value if isinstance(value, np.ndarray) and value.dtype == np.float64 \
            else np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def backward(self, seed=None):
        """Accumulate d(self)/d(leaf) into every reachable node's grad."""
        order = _toposort(self)
        self.grad = np.ones_like(self.value) if seed is None else np.asarray(seed, dtype=np.float64)
        for node in reversed(order):
            if node._vjp is not None and node.grad is not None:
                node._vjp(node.grad)

    # operator sugar; the right operand may be a Var, ndarray, or scalar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        return div(self, other)

    def __pow__(self, k):
        return power(self, k)

    def __getitem__(self, idx):
        return take(self, idx)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, leaf={self._vjp is None})"


def _toposort(root: Var):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order  # parents precede children


def _acc(node: Var, g: np.ndarray):
    if node.grad is None:
        node.grad = np.zeros_like(node.value)
    node.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a gradient back to the shape its operand had before broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _node(value, parents, vjp) -> Var:
    if _GRAD_ENABLED[0] and any(isinstance(p, Var) for p in parents):
        return Var(value, tuple(p for p in parents if isinstance(p, Var)), vjp)
    return Var(value)


def _val(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# arithmetic

def add(a, b) -> Var:
    av, bv = _val(a), _val(b)
    out = av + bv

    def vjp(g):
        if isinstance(a, Var):
            _acc(a, _unbroadcast(g, av.shape))
        if isinstance(b, Var):
            _acc(b, _unbroadcast(g, bv.shape))

    return _node(out, (a, b), vjp)


def sub(a, b) -> Var:
    av, bv = _val(a), _val(b)
    out = av - bv

    def vjp(g):
        if isinstance(a, Var):
            _acc(a, _unbroadcast(g, av.shape))
        if isinstance(b, Var):
            _acc(b, _unbroadcast(-g, bv.shape))

    return _node(out, (a, b), vjp)


def mul(a, b) -> Var:
    av, bv = _val(a), _val(b)
    out = av * bv

    def vjp(g):
        if isinstance(a, Var):
            _acc(a, _unbroadcast(g * bv, av.shape))
        if isinstance(b, Var):
            _acc(b, _unbroadcast(g * av, bv.shape))

    return _node(out, (a, b), vjp)


def div(a, b) -> Var:
    av, bv = _val(a), _val(b)
    out = av / bv

    def vjp(g):
        if isinstance(a, Var):
            _acc(a, _unbroadcast(g / bv, av.shape))
        if isinstance(b, Var):
            _acc(b, _unbroadcast(-g * av / (bv * bv), bv.shape))

    return _node(out, (a, b), vjp)


def power(a, k: float) -> Var:
    av = _val(a)
    out = av**k

    def vjp(g):
        _acc(a, g * k * av ** (k - 1.0))

    return _node(out, (a,), vjp)


def matmul(a, b) -> Var:
    """Batched matrix product; either operand may carry leading batch dims."""
    av, bv = _val(a), _val(b)
    out = np.matmul(av, bv)

    def vjp(g):
        if isinstance(a, Var):
            ga = np.matmul(g, np.swapaxes(bv, -1, -2))
            _acc(a, _unbroadcast(ga, av.shape))
        if isinstance(b, Var):
            gb = np.matmul(np.swapaxes(av, -1, -2), g)
            _acc(b, _unbroadcast(gb, bv.shape))

    return _node(out, (a, b), vjp)


# ---------------------------------------------------------------------------
# reductions and shape surgery

def sum_(a, axis=None, keepdims=False) -> Var:
    av = _val(a)
    out = av.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        gg = g if axis is None or keepdims else np.expand_dims(g, axis)
        _acc(a, np.broadcast_to(gg, av.shape))

    return _node(out, (a,), vjp)


def mean_(a, axis=None, keepdims=False) -> Var:
    av = _val(a)
    n = av.size if axis is None else np.prod([av.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def reshape(a, shape) -> Var:
    av = _val(a)
    out = av.reshape(shape)

    def vjp(g):
        _acc(a, g.reshape(av.shape))

    return _node(out, (a,), vjp)


def swap_ct(a) -> Var:
    """Swap the trailing (channel, time) axes."""
    av = _val(a)
    out = np.swapaxes(av, -1, -2)

    def vjp(g):
        _acc(a, np.swapaxes(g, -1, -2))

    return _node(out, (a,), vjp)


def take(a, idx) -> Var:
    """Basic (non-repeating) indexing; gradient scatters back into place."""
    av = _val(a)
    out = av[idx]

    def vjp(g):
        if a.grad is None:
            a.grad = np.zeros_like(av)
        a.grad[idx] += g

    return _node(out, (a,), vjp)


def concat(parts, axis: int) -> Var:
    vals = [_val(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    sizes = [v.shape[axis] for v in vals]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if isinstance(p, Var):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _acc(p, g[tuple(sl)])

    return _node(out, tuple(parts), vjp)


def pad_time(a, before: int, after: int) -> Var:
    """Zero-pad the trailing time axis."""
    av = _val(a)
    width = [(0, 0)] * (av.ndim - 1) + [(before, after)]
    out = np.pad(av, width)
    t = av.shape[-1]

    def vjp(g):
        _acc(a, g[..., before:before + t])

    return _node(out, (a,), vjp)


def upsample2_time(a, out_len: int) -> Var:
    """Insert a zero after each sample along time (values land on even slots)."""
    av = _val(a)
    out = np.zeros(av.shape[:-1] + (out_len,), dtype=np.float64)
    out[..., 0:2 * av.shape[-1]:2] = av

    def vjp(g):
        _acc(a, g[..., 0:2 * av.shape[-1]:2])

    return _node(out, (a,), vjp)


# ---------------------------------------------------------------------------
# elementwise nonlinearities

def exp_(a) -> Var:
    out = np.exp(_val(a))

    def vjp(g):
        _acc(a, g * out)

    return _node(out, (a,), vjp)


def log_(a) -> Var:
    av = _val(a)
    out = np.log(av)

    def vjp(g):
        _acc(a, g / av)

    return _node(out, (a,), vjp)


def sigmoid_(a) -> Var:
    av = _val(a)
    out = np.empty_like(av)
    pos = av >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-av[pos]))
    ez = np.exp(av[~pos])
    out[~pos] = ez / (1.0 + ez)

    def vjp(g):
        _acc(a, g * out * (1.0 - out))

    return _node(out, (a,), vjp)


def gelu_(a) -> Var:
    """Exact Gaussian-CDF form z * Phi(z); no tanh approximation."""
    av = _val(a)
    cdf = 0.5 * (1.0 + _erf(av * _INV_SQRT2))
    out = av * cdf

    def vjp(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * av * av)
        _acc(a, g * (cdf + av * pdf))

    return _node(out, (a,), vjp)


def softmax_(a, axis: int) -> Var:
    """Stable softmax along one axis (the max shift is exact, not approximate)."""
    av = _val(a)
    shifted = exp_(sub(a, av.max(axis=axis, keepdims=True)))
    return div(shifted, sum_(shifted, axis=axis, keepdims=True))


# ---------------------------------------------------------------------------
# recurrence

def leaky_scan(u, lam) -> Var:
    """First-order recurrence h_t = lam * h_{t-1} + (1 - lam) * u_t, h_{-1} = 0.

    ``u`` has shape (..., C, T); ``lam`` broadcasts against (..., C) per step.
    The backward pass is the time-reversed recurrence on the incoming
    gradients; lam's gradient collects g_t * (h_{t-1} - u_t) over time.
    """
    uv, lv = _val(u), _val(lam)
    t_len = uv.shape[-1]
    h = np.empty_like(uv)
    state = np.zeros(uv.shape[:-1], dtype=np.float64)
    for t in range(t_len):
        state = lv * state + (1.0 - lv) * uv[..., t]
        h[..., t] = state

    def vjp(g):
        gu = np.empty_like(uv) if isinstance(u, Var) else None
        glam = np.zeros(np.broadcast_shapes(lv.shape, uv.shape[:-1]), dtype=np.float64) \
            if isinstance(lam, Var) else None
        carry = np.zeros(uv.shape[:-1], dtype=np.float64)
        for t in range(t_len - 1, -1, -1):
            carry = g[..., t] + lv * carry  # total dL/dh_t
            prev = h[..., t - 1] if t > 0 else 0.0
            if glam is not None:
                glam += carry * (prev - uv[..., t])
            if gu is not None:
                gu[..., t] = (1.0 - lv) * carry
        if gu is not None:
            _acc(u, gu)
        if glam is not None:
            _acc(lam, _unbroadcast(glam, lv.shape))

    return _node(h, (u, lam), vjp)
