"""One-dimensional discrete wavelet analysis/synthesis along time, plus the
learned subband enhancement and the full frequency branch.

Analysis correlates the signal with the low/high filter pair at stride 2,
pair-aligned so coefficient i covers samples (2i, 2i+1, ...); indices beyond
the end wrap periodically (only db2 reaches past the Haar support). Synthesis
is the exact transpose: upsample each subband by 2, filter, and sum, which
makes idwt1(dwt1(x)) the identity for these orthonormal banks. Odd-length
signals are zero-padded by one tail sample before analysis and cropped after
synthesis.

Because analysis and synthesis are mutual transposes, each is the other's
backward pass; the tape hooks below exploit that directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import ShapeMismatch
from .ops import dwconv1d

_SQRT2 = math.sqrt(2.0)
_SQRT3 = math.sqrt(3.0)

_HAAR_LO = np.array([1.0, 1.0]) / _SQRT2
_DB2_LO = np.array([1.0 + _SQRT3, 3.0 + _SQRT3, 3.0 - _SQRT3, 1.0 - _SQRT3]) / (4.0 * _SQRT2)


def _qmf(lo: np.ndarray) -> np.ndarray:
    """High-pass from low-pass: g[j] = (-1)^j * lo[n-1-j]."""
    signs = np.array([(-1.0) ** j for j in range(len(lo))])
    return signs * lo[::-1]


@dataclass(frozen=True)
class WaveletFilters:
    """Analysis pair (f_lo, f_hi) and the matching synthesis pair (g_lo, g_hi)."""

    basis: str
    f_lo: np.ndarray
    f_hi: np.ndarray
    g_lo: np.ndarray
    g_hi: np.ndarray


def wavelet_filters(basis: str) -> WaveletFilters:
    if basis == "haar":
        lo = _HAAR_LO
    elif basis == "db2":
        lo = _DB2_LO
    else:
        raise ValueError(f"unknown wavelet basis {basis!r} (supported: haar, db2)")
    hi = _qmf(lo)
    # synthesis = transpose of analysis = true convolution with the same
    # filters, i.e. cross-correlation with the reversed taps
    return WaveletFilters(basis, lo, hi, lo[::-1].copy(), hi[::-1].copy())


@dataclass
class SubbandPair:
    """Low/high subbands of one decomposition level, each (..., C, ceil(T/2))."""

    low: object
    high: object
    level: int = 1
    original_t: int = 0


def _gather_idx(t_even: int, flen: int) -> np.ndarray:
    i = 2 * np.arange(t_even // 2)[:, None]
    return (i + np.arange(flen)[None, :]) % t_even


def _analyze_one(x: np.ndarray, filt: np.ndarray) -> np.ndarray:
    idx = _gather_idx(x.shape[-1], len(filt))
    return x[..., idx] @ filt


def _synth_accumulate(out: np.ndarray, coeff: np.ndarray, filt: np.ndarray):
    t_even = out.shape[-1]
    n2 = t_even // 2
    for j in range(len(filt)):
        cols = (2 * np.arange(n2) + j) % t_even
        out[..., cols] += filt[j] * coeff
    return out


def _synthesize(low: np.ndarray, high: np.ndarray, filters: WaveletFilters) -> np.ndarray:
    out = np.zeros(low.shape[:-1] + (2 * low.shape[-1],), dtype=np.float64)
    _synth_accumulate(out, low, filters.f_lo)
    _synth_accumulate(out, high, filters.f_hi)
    return out


def dwt1(x, filters: WaveletFilters) -> SubbandPair:
    """One analysis level; x is (..., C, T) with T >= 2 (odd T is tail-padded)."""
    xv = x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)
    t_len = xv.shape[-1]
    if t_len < 2:
        raise ValueError(f"dwt1: need T >= 2, got {t_len}")
    xw = x if isinstance(x, Var) else Var(xv)
    if t_len % 2:
        xw = ad.pad_time(xw, 0, 1)
    xe = xw.value

    low_val = _analyze_one(xe, filters.f_lo)
    high_val = _analyze_one(xe, filters.f_hi)

    def vjp_low(g):
        gx = np.zeros_like(xe)
        ad._acc(xw, _synth_accumulate(gx, g, filters.f_lo))

    def vjp_high(g):
        gx = np.zeros_like(xe)
        ad._acc(xw, _synth_accumulate(gx, g, filters.f_hi))

    low = ad._node(low_val, (xw,), vjp_low)
    high = ad._node(high_val, (xw,), vjp_high)
    if not isinstance(x, Var):
        low, high = low.value, high.value
    return SubbandPair(low, high, level=1, original_t=t_len)


def idwt1(pair: SubbandPair, filters: WaveletFilters, original_t: int):
    """Inverse of dwt1: upsample-by-2, filter with (g_lo, g_hi), sum, crop."""
    low, high = pair.low, pair.high
    lv = low.value if isinstance(low, Var) else np.asarray(low, dtype=np.float64)
    hv = high.value if isinstance(high, Var) else np.asarray(high, dtype=np.float64)
    if lv.shape != hv.shape:
        raise ShapeMismatch(f"idwt1: subband shapes differ: {lv.shape} vs {hv.shape}")
    n2 = lv.shape[-1]
    if original_t not in (2 * n2, 2 * n2 - 1):
        raise ValueError(
            f"idwt1: original_t must be {2 * n2} or {2 * n2 - 1}, got {original_t}")

    unwrap = not (isinstance(low, Var) or isinstance(high, Var))
    out_val = _synthesize(lv, hv, filters)

    def vjp(g):
        if isinstance(low, Var):
            ad._acc(low, _analyze_one(g, filters.f_lo))
        if isinstance(high, Var):
            ad._acc(high, _analyze_one(g, filters.f_hi))

    out = ad._node(out_val, (low, high), vjp)
    if original_t % 2:
        out = out[..., :original_t]
    return out.value if unwrap else out


class SubbandEnhance:
    """Learned refinement of one level's concatenated subbands: a depthwise
    size-3 convolution over the 2C stacked channels followed by a per-channel
    scale. Initialized to the exact identity (delta kernel, unit scale)."""

    def __init__(self, store, prefix: str, channels: int):
        delta = np.zeros((2 * channels, 3))
        delta[:, 1] = 1.0
        self.kernel = store.add(f"{prefix}.kernel", delta)
        self.scale = store.add(f"{prefix}.scale", np.ones((2 * channels, 1)))
        self.channels = channels

    def __call__(self, ctx, pair: SubbandPair) -> SubbandPair:
        return subband_enhance(pair, ctx.p(self.kernel), ctx.p(self.scale))


def subband_enhance(pair: SubbandPair, kernel, scale) -> SubbandPair:
    """Concat [L; H] on channels -> dwconv1d(k=3) -> per-channel scale -> split."""
    low, high = pair.low, pair.high
    unwrap = not (isinstance(low, Var) or isinstance(high, Var))
    lw, hw = ad.as_var(low), ad.as_var(high)
    c = lw.shape[-2]
    both = ad.concat([lw, hw], axis=-2)
    both = dwconv1d(both, kernel)
    both = ad.mul(both, scale if isinstance(scale, Var) else np.asarray(scale, dtype=np.float64))
    new_low, new_high = both[..., :c, :], both[..., c:, :]
    if unwrap and not (isinstance(kernel, Var) or isinstance(scale, Var)):
        new_low, new_high = new_low.value, new_high.value
    return SubbandPair(new_low, new_high, level=pair.level, original_t=pair.original_t)


def min_length_for_levels(levels: int) -> int:
    """Smallest T whose padded length supports `levels` analysis steps."""
    return max(2, 2**levels - 1)


class WaveletBranch:
    """Frequency branch: analysis cascade on the low band, per-level learned
    enhancement, then bottom-up synthesis where each deeper reconstruction is
    injected into the current enhanced low band before inverting."""

    def __init__(self, store, prefix: str, channels: int, levels: int, basis: str):
        if levels < 1:
            raise ValueError(f"wavelet levels must be >= 1, got {levels}")
        self.filters = wavelet_filters(basis)
        self.levels = levels
        self.enhance = [SubbandEnhance(store, f"{prefix}.level{q}", channels)
                        for q in range(1, levels + 1)]

    def __call__(self, ctx, x: Var) -> Var:
        enhancers = [(lambda p, e=e: e(ctx, p)) for e in self.enhance]
        return wavelet_branch(x, self.levels, self.filters, enhancers)


def wavelet_branch(x, levels: int, filters: WaveletFilters, enhancers) -> Var:
    """Full analysis/enhance/synthesize cascade; output shape equals input shape.

    ``enhancers`` is one callable per level mapping SubbandPair -> SubbandPair.
    """
    xv = x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)
    t_len = xv.shape[-1]
    padded = t_len + (t_len % 2)
    if t_len < 2 or padded < 2**levels:
        raise ValueError(
            f"wavelet_branch: T={t_len} too short for {levels} levels; "
            f"minimal legal T is {min_length_for_levels(levels)}")

    pairs = []
    current = x
    for q in range(1, levels + 1):
        pair = dwt1(current, filters)
        pair.level = q
        pairs.append(enhancers[q - 1](pair))
        current = pair.low

    recon = None  # residual from deeper levels, injected into the low band
    for pair in reversed(pairs):
        low = pair.low if recon is None else ad.add(pair.low, recon)
        recon = idwt1(SubbandPair(low, pair.high), filters, pair.original_t)
    return recon
