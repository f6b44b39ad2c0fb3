"""Evaluation metrics: Spearman rank correlation, Fisher-z averaging across
categories, and MSE in original score units.

Spearman is the normalized rank covariance (Pearson applied to average
ranks). A constant input makes the correlation undefined; that outcome is
reported as None, never silently coerced to 0, so degenerate constant
predictors surface immediately.
"""

from __future__ import annotations

import math

import numpy as np

_CLIP = 1.0 - 1e-12


def ranks(v) -> np.ndarray:
    """1-based ranks; ties receive the average of their occupied positions."""
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1 or a.size < 2:
        raise ValueError(f"ranks: need a 1-D vector of length >= 2, got shape {a.shape}")
    order = np.argsort(a, kind="stable")
    out = np.empty(a.size, dtype=np.float64)
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and a[order[j + 1]] == a[order[i]]:
            j += 1
        avg = 0.5 * (i + j) + 1.0  # mean of positions i..j, 1-based
        out[order[i:j + 1]] = avg
        i = j + 1
    return out


def spearman(p, q) -> float | None:
    """Rank correlation of two equal-length score vectors; None if undefined
    (either side constant)."""
    pa, qa = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    if pa.shape != qa.shape or pa.ndim != 1 or pa.size < 2:
        raise ValueError(f"spearman: need equal-length vectors (>= 2), got {pa.shape}, {qa.shape}")
    rp, rq = ranks(pa), ranks(qa)
    dp, dq = rp - rp.mean(), rq - rq.mean()
    denom = math.sqrt(float(np.sum(dp * dp)) * float(np.sum(dq * dq)))
    if denom == 0.0:
        return None
    rho = float(np.sum(dp * dq)) / denom
    return min(1.0, max(-1.0, rho))


def spearman_d2(p, q) -> float:
    """Tie-free shortcut 1 - 6 * sum(d^2) / (n(n^2 - 1)); oracle cross-check."""
    rp, rq = ranks(p), ranks(q)
    n = rp.size
    d2 = float(np.sum((rp - rq) ** 2))
    return 1.0 - 6.0 * d2 / (n * (n * n - 1.0))


def fisher_z_avg(rhos) -> float:
    """tanh(mean(atanh(rho))); inputs at exactly +/-1 are nudged inside."""
    rhos = list(rhos)
    if not rhos:
        raise ValueError("fisher_z_avg: empty input")
    clipped = [min(_CLIP, max(-_CLIP, r)) for r in rhos]
    return math.tanh(sum(math.atanh(r) for r in clipped) / len(clipped))


def mse_original(pred_normalized, raw_scores, lo: float, hi: float) -> float:
    """De-normalize predictions with the training (min, max), then MSE against
    the raw scores."""
    if hi == lo:
        raise ValueError("mse_original: score range is empty (max == min)")
    pred = lo + np.asarray(pred_normalized, dtype=np.float64) * (hi - lo)
    raw = np.asarray(raw_scores, dtype=np.float64)
    return float(np.mean((pred - raw) ** 2))


def eval_report(groups: dict, lo: float, hi: float) -> dict:
    """Assemble the JSON-ready report. ``groups`` maps category name to
    (normalized predictions, raw scores); keys: rho, mse, fisher_avg, n,
    warnings."""
    rho: dict = {}
    mse: dict = {}
    counts: dict = {}
    warnings: list[str] = []
    defined: list[float] = []
    for name, (pred, raw) in groups.items():
        counts[name] = int(len(raw))
        mse[name] = mse_original(pred, raw, lo, hi)
        r = spearman(raw, pred) if len(raw) >= 2 else None
        rho[name] = r
        if r is None:
            warnings.append(f"{name}: spearman undefined (constant input)")
        else:
            if abs(r) >= 1.0:
                warnings.append(f"{name}: |rho| = 1 clipped for fisher averaging")
            defined.append(r)
    fisher = fisher_z_avg(defined) if defined else None
    return {"rho": rho, "mse": mse, "fisher_avg": fisher, "n": counts,
            "warnings": warnings}
