"""iMambaWave block: channel split into an untouched identity part and an
enhancement part, dual-branch temporal/frequency encoding of the enhancement
part, per-time-step scalar gate fusion, dropout + layer normalization, and
concatenation back to the full channel count.

The identity slice is the first floor(alpha * C) channels and is passed
through bitwise; it anchors the block so later fusion stages always see the
unprocessed modality content.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .bimamba import BiMambaStack
from .errors import ShapeMismatch
from .ops import dropout, layernorm, linear
from .rng import RngState
from .wavelet import WaveletBranch


@dataclass(frozen=True)
class SplitSpec:
    """Channel partition: first c_id channels bypass, the rest are enhanced."""

    alpha: float
    c: int
    c_id: int
    c_en: int

    @staticmethod
    def from_ratio(alpha: float, channels: int) -> "SplitSpec":
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"split ratio must be in [0, 1], got {alpha}")
        c_id = int(math.floor(alpha * channels))
        return SplitSpec(alpha, channels, c_id, channels - c_id)


def split(f, spec: SplitSpec):
    """(identity slice, enhancement slice); concatenating them restores f."""
    fv = f.value if isinstance(f, Var) else f
    if fv.shape[-2] != spec.c:
        raise ShapeMismatch(
            f"split: spec expects {spec.c} channels, tensor has {fv.shape}")
    return f[..., :spec.c_id, :], f[..., spec.c_id:, :]


class GateNet:
    """Two-layer per-time-step perceptron producing one scalar gate in (0, 1):
    C_en -> ceil(C_en / 2) with GELU, then -> 1, then sigmoid."""

    def __init__(self, store, prefix: str, c_en: int, rng: RngState):
        hidden = max(1, (c_en + 1) // 2)
        self.w1 = store.add(f"{prefix}.w1", rng.normal((hidden, c_en)) / math.sqrt(c_en))
        self.b1 = store.add(f"{prefix}.b1", np.zeros((hidden, 1)))
        self.w2 = store.add(f"{prefix}.w2", rng.normal((1, hidden)) / math.sqrt(hidden))
        self.b2 = store.add(f"{prefix}.b2", np.zeros((1, 1)))

    def __call__(self, ctx, f_en: Var) -> Var:
        return gate(f_en, ctx.p(self.w1), ctx.p(self.b1), ctx.p(self.w2), ctx.p(self.b2))


def gate(f_en, w1, b1, w2, b2):
    """One gate value per time step from that step's channel vector alone."""
    fv = f_en.value if isinstance(f_en, Var) else np.asarray(f_en)
    if fv.shape[-2] < 1:
        raise ValueError("gate: undefined for an empty enhancement slice")
    unwrap = not any(isinstance(a, Var) for a in (f_en, w1, b1, w2, b2))
    hidden = ad.gelu_(ad.as_var(linear(f_en, w1, b1)))
    out = ad.sigmoid_(ad.as_var(linear(hidden, w2, b2)))
    return out.value if unwrap else out


def gated_fuse(y_m, y_w, sigma, drop_rate: float, mode: str, ln_gain, ln_shift,
               rng: RngState | None = None, eps: float = 1e-5):
    """sigma * y_m + (1 - sigma) * y_w, then dropout and layer normalization."""
    mv = y_m.value if isinstance(y_m, Var) else np.asarray(y_m)
    sv = sigma.value if isinstance(sigma, Var) else np.asarray(sigma)
    if sv.shape[-1] != mv.shape[-1]:
        raise ShapeMismatch(
            f"gated_fuse: gate length {sv.shape} does not match features {mv.shape}")
    unwrap = not any(isinstance(a, Var) for a in (y_m, y_w, sigma, ln_gain, ln_shift))
    fused = ad.add(ad.mul(sigma, y_m), ad.mul(ad.sub(1.0, sigma), y_w))
    fused = dropout(fused, drop_rate, mode, rng)
    out = layernorm(fused, ln_gain, ln_shift, eps)
    return out.value if unwrap else out


class ImwBlock:
    """Full block wiring: split -> (Bi-Mamba, wavelet) -> gate -> fuse -> concat.

    ``fusion`` selects how the two branch outputs combine: "gated" (default),
    "sum" (plain average), or "concat" (channel concat + 1x1 back to C_en).
    ``forced_sigma`` pins the gate to a constant (ablations); ``enabled=False``
    turns the whole block into the identity (identity-only ablation).
    """

    def __init__(self, store, prefix: str, channels: int, rng: RngState, *,
                 alpha: float = 0.25, depth: int = 1, levels: int = 1,
                 basis: str = "haar", drop_rate: float = 0.1,
                 fusion: str = "gated", forced_sigma: float | None = None,
                 enabled: bool = True, tied: bool = False):
        if fusion not in ("gated", "sum", "concat"):
            raise ValueError(f"unknown fusion strategy {fusion!r}")
        self.block_id = prefix
        self.spec = SplitSpec.from_ratio(alpha, channels)
        self.drop_rate = drop_rate
        self.fusion = fusion
        self.forced_sigma = forced_sigma
        self.enabled = enabled
        c_en = self.spec.c_en
        if not enabled or c_en == 0:
            return
        self.temporal = BiMambaStack(store, f"{prefix}.mamba", c_en, depth, rng, tied=tied)
        self.frequency = WaveletBranch(store, f"{prefix}.wave", c_en, levels, basis)
        if fusion == "gated" and forced_sigma is None:
            self.gate_net = GateNet(store, f"{prefix}.gate", c_en, rng)
        if fusion == "concat":
            self.mix_w = store.add(f"{prefix}.mix.w",
                                   rng.normal((c_en, 2 * c_en)) / math.sqrt(2 * c_en))
            self.mix_b = store.add(f"{prefix}.mix.b", np.zeros((c_en, 1)))
        self.ln_gain = store.add(f"{prefix}.ln.gain", np.ones((c_en, 1)))
        self.ln_shift = store.add(f"{prefix}.ln.shift", np.zeros((c_en, 1)))

    def __call__(self, ctx, f: Var) -> Var:
        if not self.enabled or self.spec.c_en == 0:
            return f
        f_id, f_en = split(f, self.spec)
        y_m = self.temporal(ctx, f_en)
        y_w = self.frequency(ctx, f_en)

        if self.fusion == "sum":
            fused = ad.mul(ad.add(y_m, y_w), 0.5)
            fused = dropout(fused, self.drop_rate, ctx.mode, ctx.rng)
            fused = layernorm(fused, ctx.p(self.ln_gain), ctx.p(self.ln_shift))
        elif self.fusion == "concat":
            both = ad.concat([y_m, y_w], axis=-2)
            fused = linear(both, ctx.p(self.mix_w), ctx.p(self.mix_b))
            fused = dropout(fused, self.drop_rate, ctx.mode, ctx.rng)
            fused = layernorm(fused, ctx.p(self.ln_gain), ctx.p(self.ln_shift))
        else:
            if self.forced_sigma is None:
                sigma = self.gate_net(ctx, f_en)
            else:
                shape = f_en.value.shape[:-2] + (1, f_en.value.shape[-1])
                sigma = Var(np.full(shape, self.forced_sigma))
            if ctx.gate_sink is not None:
                ctx.gate_sink(self.block_id, sigma.value)
            fused = gated_fuse(y_m, y_w, sigma, self.drop_rate, ctx.mode,
                               ctx.p(self.ln_gain), ctx.p(self.ln_shift), ctx.rng)

        if self.spec.c_id == 0:
            return fused
        return ad.concat([f_id, fused], axis=-2)


def imw_forward(ctx, block: ImwBlock, f: Var) -> Var:
    """Functional alias for calling a block; output channels == input channels."""
    return block(ctx, f)
