"""Group3M fusion stage: multi-kernel local refinement of the fused feature,
complementary attention over the three modality branches, time-frequency
enhancement of the fused feature, concatenation, 1x1 projection with batch
normalization and GELU, and temporal pooling.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import ShapeMismatch
from .imambawave import ImwBlock
from .ops import BatchNorm, dwconv1d, gelu, linear, temporal_avg_pool
from .rng import RngState

MODALITIES = ("rgb", "flow", "audio")


class MkConv:
    """Multi-kernel depthwise temporal convolution bank with 1x1 fusion,
    residual aggregation, and a lightweight feed-forward refinement.

    Kernel sizes are exactly {3, 5, ..., 2K+1}. The output is
    gelu(F + U + FFN(F + U)) where U is the 1x1-projected concat of the K
    depthwise responses.
    """

    def __init__(self, store, prefix: str, channels: int, k: int, rng: RngState):
        if k < 1:
            raise ValueError(f"mkconv: K must be >= 1, got {k}")
        self.sizes = [2 * j + 1 for j in range(1, k + 1)]
        self.kernels = [store.add(f"{prefix}.dw{size}",
                                  rng.normal((channels, size)) / math.sqrt(size))
                        for size in self.sizes]
        self.proj_w = store.add(f"{prefix}.proj.w",
                                rng.normal((channels, k * channels)) / math.sqrt(k * channels))
        self.proj_b = store.add(f"{prefix}.proj.b", np.zeros((channels, 1)))
        self.ffn_w1 = store.add(f"{prefix}.ffn.w1",
                                rng.normal((2 * channels, channels)) / math.sqrt(channels))
        self.ffn_b1 = store.add(f"{prefix}.ffn.b1", np.zeros((2 * channels, 1)))
        self.ffn_w2 = store.add(f"{prefix}.ffn.w2",
                                rng.normal((channels, 2 * channels)) / math.sqrt(2 * channels))
        self.ffn_b2 = store.add(f"{prefix}.ffn.b2", np.zeros((channels, 1)))

    def __call__(self, ctx, f: Var) -> Var:
        return mkconv(f, [ctx.p(n) for n in self.kernels],
                      ctx.p(self.proj_w), ctx.p(self.proj_b),
                      ctx.p(self.ffn_w1), ctx.p(self.ffn_b1),
                      ctx.p(self.ffn_w2), ctx.p(self.ffn_b2))


def mkconv(f, kernels, proj_w, proj_b, ffn_w1, ffn_b1, ffn_w2, ffn_b2):
    unwrap = not any(isinstance(a, Var) for a in (f, proj_w))
    responses = [dwconv1d(ad.as_var(f), k) for k in kernels]
    u = linear(ad.concat([ad.as_var(r) for r in responses], axis=-2), proj_w, proj_b)
    inner = ad.add(ad.as_var(f), u)
    ffn = linear(gelu(linear(inner, ffn_w1, ffn_b1)), ffn_w2, ffn_b2)
    out = gelu(ad.add(inner, ffn))
    return out.value if unwrap else out


class Moca:
    """Modal complementary attention: per time step, the fused feature queries
    the three modality features with negated dot-product scores, so the least
    similar (most complementary) modality receives the largest weight.

    H heads with d_h = C / H; shared per-head key/value projections across
    modalities; softmax runs over the 3 modalities only, never across time.
    """

    def __init__(self, store, prefix: str, channels: int, heads: int, rng: RngState):
        if heads < 1 or channels % heads != 0:
            raise ValueError(f"moca: heads must divide channels, got H={heads}, C={channels}")
        self.heads = heads
        self.d_h = channels // heads
        std = 1.0 / math.sqrt(channels)
        self.w_q = [store.add(f"{prefix}.h{h}.wq", rng.normal((self.d_h, channels)) * std)
                    for h in range(heads)]
        self.w_k = [store.add(f"{prefix}.h{h}.wk", rng.normal((self.d_h, channels)) * std)
                    for h in range(heads)]
        self.w_v = [store.add(f"{prefix}.h{h}.wv", rng.normal((self.d_h, channels)) * std)
                    for h in range(heads)]
        self.w_o = store.add(f"{prefix}.wo", rng.normal((channels, channels)) * std)

    def __call__(self, ctx, f_o: Var, feats: dict) -> Var:
        return moca(f_o, feats,
                    [ctx.p(n) for n in self.w_q],
                    [ctx.p(n) for n in self.w_k],
                    [ctx.p(n) for n in self.w_v],
                    ctx.p(self.w_o))


def moca_weights(f_o, feats, w_q, w_k, w_v):
    """Attention weights per head: list of (..., 3, T) simplex tensors."""
    fv = f_o.value if isinstance(f_o, Var) else np.asarray(f_o)
    for m in MODALITIES:
        mv = feats[m].value if isinstance(feats[m], Var) else np.asarray(feats[m])
        if mv.shape != fv.shape:
            raise ShapeMismatch(
                f"moca: modality {m} shape {mv.shape} != fused shape {fv.shape}")
    d_h = (w_q[0].value if isinstance(w_q[0], Var) else w_q[0]).shape[0]
    scale = -1.0 / math.sqrt(d_h)
    all_weights = []
    for h in range(len(w_q)):
        q = ad.matmul(w_q[h], f_o)
        scores = []
        for m in MODALITIES:
            k = ad.matmul(w_k[h], feats[m])
            scores.append(ad.mul(ad.sum_(ad.mul(q, k), axis=-2, keepdims=True), scale))
        all_weights.append(ad.softmax_(ad.concat(scores, axis=-2), axis=-2))
    return all_weights


def moca(f_o, feats, w_q, w_k, w_v, w_o):
    unwrap = not any(isinstance(a, Var) for a in (f_o, w_o))
    fw = ad.as_var(f_o)
    featsw = {m: ad.as_var(feats[m]) for m in MODALITIES}
    weights = moca_weights(fw, featsw, w_q, w_k, w_v)
    head_outs = []
    for h, w in enumerate(weights):
        mixed = None
        for i, m in enumerate(MODALITIES):
            v = ad.matmul(w_v[h], featsw[m])
            term = ad.mul(w[..., i:i + 1, :], v)
            mixed = term if mixed is None else ad.add(mixed, term)
        head_outs.append(mixed)
    out = ad.matmul(w_o, ad.concat(head_outs, axis=-2))
    return out.value if unwrap else out


class Group3MBlock:
    """One fusion stage: returns the pooled next fused feature and the pooled
    enhanced modality features."""

    def __init__(self, store, prefix: str, channels: int, rng: RngState, *,
                 mkconv_k: int = 3, heads: int = 4, imw_kwargs: dict | None = None):
        kw = dict(imw_kwargs or {})
        self.mk = MkConv(store, f"{prefix}.mkconv", channels, mkconv_k, rng)
        self.attn = Moca(store, f"{prefix}.moca", channels, heads, rng)
        self.imw = {m: ImwBlock(store, f"{prefix}.{m}", channels, rng, **kw)
                    for m in MODALITIES}
        self.imw_fused = ImwBlock(store, f"{prefix}.fused", channels, rng, **kw)
        self.proj_w = store.add(f"{prefix}.proj.w",
                                rng.normal((channels, 3 * channels)) / math.sqrt(3 * channels))
        self.proj_b = store.add(f"{prefix}.proj.b", np.zeros((channels, 1)))
        self.bn = BatchNorm(store, f"{prefix}.bn", channels)

    def __call__(self, ctx, f_o: Var, feats: dict):
        refined = self.mk(ctx, f_o)
        enhanced = {m: self.imw[m](ctx, feats[m]) for m in MODALITIES}
        complement = self.attn(ctx, refined, enhanced)
        z = ad.concat([refined, complement, self.imw_fused(ctx, refined)], axis=-2)
        projected = gelu(self.bn(ctx, linear(z, ctx.p(self.proj_w), ctx.p(self.proj_b))))
        pooled_fused = temporal_avg_pool(projected)
        pooled_feats = {m: temporal_avg_pool(enhanced[m]) for m in MODALITIES}
        return pooled_fused, pooled_feats


def group3m_forward(ctx, block: Group3MBlock, f_o: Var, feats: dict):
    """Functional alias; both temporal lengths shrink to ceil(T/2)."""
    return block(ctx, f_o, feats)
