"""Bidirectional state-space temporal branch.

Each unit averages a causal forward scan with a time-reversed backward scan.
A scan is a diagonal linear recurrent unit: per-channel decay lambda =
sigmoid(a) (stable by construction), linear input/output mixes, and a skip
path. The recurrence is h_t = lambda * h_{t-1} + (1 - lambda) * u_t with
h_{-1} = 0, so the whole scan is linear in its input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .ops import flip
from .rng import RngState

_DECAY_INIT = math.log(0.9 / 0.1)  # logit(0.9): long memory at init


@dataclass
class ScanParams:
    """a: per-channel log-decay (C,); w_in, w_out: (C, C); d: skip gain (C, 1)."""

    a: object
    w_in: object
    w_out: object
    d: object


def passthrough_scan_params(channels: int) -> ScanParams:
    """lambda ~ 0, identity mixes, no skip: the scan reduces to y == x."""
    return ScanParams(
        a=np.full(channels, -60.0),
        w_in=np.eye(channels),
        w_out=np.eye(channels),
        d=np.zeros((channels, 1)),
    )


def ssm_scan(x, p: ScanParams):
    """y_t = w_out @ h_t + d * x_t, strictly causal in x."""
    unwrap = not isinstance(x, Var) and not isinstance(p.w_in, Var)
    xv = ad.as_var(x)
    u = ad.matmul(p.w_in, xv)
    lam = ad.sigmoid_(ad.as_var(p.a))
    h = ad.leaky_scan(u, lam)
    y = ad.add(ad.matmul(p.w_out, h), ad.mul(p.d, xv))
    return y.value if unwrap else y


def bimamba_unit(x, p_fwd: ScanParams, p_bwd: ScanParams):
    """0.5 * (forward scan + un-flipped backward scan of the flipped input)."""
    unwrap = not isinstance(x, Var) and not isinstance(p_fwd.w_in, Var)
    xv = ad.as_var(x)
    fwd = ssm_scan(xv, p_fwd)
    bwd = flip(ssm_scan(flip(xv), p_bwd))
    out = ad.mul(ad.add(fwd, bwd), 0.5)
    return out.value if unwrap else out


def bimamba_stack(x, units):
    """Sequential composition of (p_fwd, p_bwd) unit parameter pairs."""
    if len(units) < 1:
        raise ValueError(f"bimamba_stack: need at least one unit, got {len(units)}")
    out = x
    for p_fwd, p_bwd in units:
        out = bimamba_unit(out, p_fwd, p_bwd)
    return out


class BiMambaStack:
    """N stacked units with independent forward/backward parameters.

    ``tied=True`` shares one parameter set per unit across both directions;
    it exists for the flip-equivariance property and is not the default.
    """

    def __init__(self, store, prefix: str, channels: int, depth: int,
                 rng: RngState, tied: bool = False):
        if depth < 1:
            raise ValueError(f"bimamba depth must be >= 1, got {depth}")
        self.depth = depth
        self.tied = tied
        self._names = []
        std = 1.0 / math.sqrt(channels)
        for n in range(depth):
            dirs = ("fb",) if tied else ("f", "b")
            per_unit = []
            for tag in dirs:
                base = f"{prefix}.unit{n}.{tag}"
                per_unit.append({
                    "a": store.add(f"{base}.a", np.full(channels, _DECAY_INIT)),
                    "w_in": store.add(f"{base}.w_in", rng.normal((channels, channels)) * std),
                    "w_out": store.add(f"{base}.w_out", rng.normal((channels, channels)) * std),
                    "d": store.add(f"{base}.d", np.ones((channels, 1))),
                })
            self._names.append(per_unit)

    def _params(self, ctx, names) -> ScanParams:
        return ScanParams(a=ctx.p(names["a"]), w_in=ctx.p(names["w_in"]),
                          w_out=ctx.p(names["w_out"]), d=ctx.p(names["d"]))

    def __call__(self, ctx, x: Var) -> Var:
        units = []
        for per_unit in self._names:
            fwd = self._params(ctx, per_unit[0])
            bwd = fwd if self.tied else self._params(ctx, per_unit[1])
            units.append((fwd, bwd))
        return bimamba_stack(x, units)
