"""Dense sequence-tensor arithmetic and neural primitives.

A sequence tensor is a float64 ndarray laid out (channels, time); every
operation also accepts a leading batch dimension, (batch, channels, time).
All functions take either plain ndarrays or autodiff ``Var`` nodes: pass in
at least one Var and the result is a Var wired into the tape, pass arrays
only and the result is an array.

Conventions fixed once for the whole package:
  - all 1-D convolutions are cross-correlations (no kernel flip) with zero
    padding to "same" length;
  - GELU is the exact Gaussian-CDF form, never the tanh approximation;
  - layer normalization uses the biased variance across channels per step.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import ShapeMismatch
from .rng import RngState


def _wrap(*args):
    """Coerce mixed inputs for a dual-interface op; returns (vars, unwrap)."""
    unwrap = not any(isinstance(a, Var) for a in args)
    return [ad.as_var(a) for a in args], unwrap


def _out(x: Var, unwrap: bool):
    return x.value if unwrap else x


def linear(x, weight, bias):
    """out[c, t] = sum_i weight[c, i] * x[i, t] + bias[c]."""
    (xv, wv, bv), unwrap = _wrap(x, weight, bias)
    c_in = xv.shape[-2]
    if wv.shape[-1] != c_in:
        raise ShapeMismatch(
            f"linear: weight shape {wv.shape} does not match input channels "
            f"{xv.shape} (need weight columns == {c_in})")
    col = bv if bv.ndim == 2 else ad.reshape(bv, (bv.shape[0], 1))
    return _out(ad.add(ad.matmul(wv, xv), col), unwrap)


def dwconv1d(x, kernels):
    """Depthwise 1-D cross-correlation, zero-padded to the input length.

    kernels has shape (C, k) with k odd; out[c, t] = sum_j kernels[c, j] *
    x_padded[c, t + j].
    """
    (xv, kv), unwrap = _wrap(x, kernels)
    k = kv.shape[-1]
    if k % 2 == 0 or k < 1:
        raise ValueError(f"dwconv1d: kernel size must be odd and positive, got {k}")
    if kv.shape[-2] != xv.shape[-2]:
        raise ShapeMismatch(
            f"dwconv1d: kernels {kv.shape} do not match input channels {xv.shape}")
    half = (k - 1) // 2
    t_len = xv.shape[-1]
    padded = ad.pad_time(xv, half, half)
    acc = None
    for j in range(k):
        term = ad.mul(kv[..., :, j:j + 1], padded[..., j:j + t_len])
        acc = term if acc is None else ad.add(acc, term)
    return _out(acc, unwrap)


def softmax(v):
    """Probability vector over the last axis; stable under large inputs."""
    (vv,), unwrap = _wrap(v)
    if vv.shape[-1] == 0:
        raise ValueError("softmax: empty input")
    return _out(ad.softmax_(vv, axis=-1), unwrap)


def sigmoid(x):
    (xv,), unwrap = _wrap(x)
    return _out(ad.sigmoid_(xv), unwrap)


def gelu(x):
    (xv,), unwrap = _wrap(x)
    return _out(ad.gelu_(xv), unwrap)


def activation(x, kind: str):
    """Elementwise nonlinearity; kind is "sigmoid" or "gelu"."""
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "gelu":
        return gelu(x)
    raise ValueError(f"activation: unsupported kind {kind!r}")


def layernorm(x, gain, shift, eps: float = 1e-5):
    """Normalize each time step across channels, then scale and shift."""
    if eps <= 0:
        raise ValueError(f"layernorm: eps must be positive, got {eps}")
    (xv, gv, sv), unwrap = _wrap(x, gain, shift)
    if xv.shape[-2] < 1:
        raise ShapeMismatch(f"layernorm: need at least one channel, got {xv.shape}")
    mu = ad.mean_(xv, axis=-2, keepdims=True)
    centered = ad.sub(xv, mu)
    var = ad.mean_(ad.mul(centered, centered), axis=-2, keepdims=True)
    inv = ad.power(ad.add(var, eps), -0.5)
    gcol = gv if gv.ndim == 2 else ad.reshape(gv, (gv.shape[0], 1))
    scol = sv if sv.ndim == 2 else ad.reshape(sv, (sv.shape[0], 1))
    return _out(ad.add(ad.mul(ad.mul(centered, inv), gcol), scol), unwrap)


class BatchNorm:
    """Per-channel normalization over all (sample, time) positions.

    Train mode normalizes with the current batch statistics (biased variance)
    and updates running statistics with momentum 0.1; eval mode uses the
    running statistics, which start at mean 0 / var 1.
    """

    MOMENTUM = 0.1

    def __init__(self, store, prefix: str, channels: int, eps: float = 1e-5):
        self.eps = eps
        self.gain = store.add(f"{prefix}.gain", np.ones((channels, 1)))
        self.shift = store.add(f"{prefix}.shift", np.zeros((channels, 1)))
        self.run_mean = store.add(f"{prefix}.run_mean", np.zeros((channels, 1)), trainable=False)
        self.run_var = store.add(f"{prefix}.run_var", np.ones((channels, 1)), trainable=False)

    def __call__(self, ctx, x: Var) -> Var:
        xv = x.value
        axes = tuple(i for i in range(xv.ndim) if i != xv.ndim - 2)
        if ctx.mode == "train":
            n = int(np.prod([xv.shape[i] for i in axes]))
            if n < 2:
                raise ValueError(f"batchnorm: train mode needs batch*time >= 2 per channel, got {n}")
            mu = ad.mean_(x, axis=axes, keepdims=True)
            centered = ad.sub(x, mu)
            var = ad.mean_(ad.mul(centered, centered), axis=axes, keepdims=True)
            # running buffers track detached batch statistics
            mu_col = mu.value.reshape(xv.shape[-2], 1)
            var_col = var.value.reshape(xv.shape[-2], 1)
            rm, rv = ctx.store[self.run_mean], ctx.store[self.run_var]
            rm.value[...] = (1.0 - self.MOMENTUM) * rm.value + self.MOMENTUM * mu_col
            rv.value[...] = (1.0 - self.MOMENTUM) * rv.value + self.MOMENTUM * var_col
        else:
            mu = ctx.store[self.run_mean].value
            var = ctx.store[self.run_var].value
        inv = ad.power(ad.add(var, self.eps), -0.5)
        out = ad.mul(ad.sub(x, mu), inv)
        return ad.add(ad.mul(out, ctx.p(self.gain)), ctx.p(self.shift))


def dropout(x, rate: float, mode: str, rng: RngState | None = None):
    """Inverted dropout: train mode zeroes with probability rate and rescales
    survivors by 1/(1-rate); eval mode is the identity (bitwise)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate must be in [0, 1), got {rate}")
    if mode == "eval" or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout: train mode needs an RngState")
    (xv,), unwrap = _wrap(x)
    keep = rng.uniform(xv.shape) >= rate
    mask = keep.astype(np.float64) / (1.0 - rate)
    return _out(ad.mul(xv, mask), unwrap)


def temporal_avg_pool(x):
    """Average adjacent time pairs; a trailing odd element passes through."""
    (xv,), unwrap = _wrap(x)
    t_len = xv.shape[-1]
    if t_len <= 1:
        return _out(xv, unwrap)
    pairs = t_len // 2
    even = xv[..., 0:2 * pairs:2]
    odd = xv[..., 1:2 * pairs:2]
    pooled = ad.mul(ad.add(even, odd), 0.5)
    if t_len % 2:
        pooled = ad.concat([pooled, xv[..., 2 * pairs:]], axis=-1)
    return _out(pooled, unwrap)


def global_avg_pool(x):
    """Mean over time per channel; returns (..., C)."""
    (xv,), unwrap = _wrap(x)
    if xv.shape[-1] < 1:
        raise ValueError("global_avg_pool: empty time axis")
    return _out(ad.mean_(xv, axis=-1), unwrap)


def flip(x):
    """Temporal reversal: out[c, t] = x[c, T-1-t]."""
    (xv,), unwrap = _wrap(x)
    return _out(xv[..., ::-1], unwrap)
