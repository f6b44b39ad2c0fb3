"""Finite-difference validation of every backward pass.

The contract for all analytic gradients in this package is agreement with a
central difference at step h in double precision. ``grad_check`` perturbs
every element of every trainable parameter, so keep the probed model small.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Var, no_grad
from .errors import NumericError
from .params import ParamStore


def grad_check_detail(f, store: ParamStore, h: float = 1e-5) -> dict[str, float]:
    """Per-parameter max relative error between analytic and numeric gradients.

    ``f`` is a deterministic closure over ``store`` (and any fixed inputs)
    returning a scalar ``Var`` with the tape attached. Relative error is
    |a - n| / max(|a|, |n|, 1e-8) per element, maxed over the parameter.
    """
    store.zero_grads()
    out = f()
    if not isinstance(out, Var) or out.value.size != 1:
        raise ValueError("grad_check: f must return a scalar Var")
    if not np.isfinite(out.value):
        raise NumericError("grad_check: f is non-finite at the base point")
    out.backward()
    analytic = {name: p.grad.copy() for name, p in store.trainable_items()}

    errors: dict[str, float] = {}
    with no_grad():
        for name, p in store.trainable_items():
            flat = p.value.reshape(-1)
            worst = 0.0
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + h
                up = float(f().value)
                flat[i] = keep - h
                down = float(f().value)
                flat[i] = keep
                if not (np.isfinite(up) and np.isfinite(down)):
                    raise NumericError(f"grad_check: non-finite f while perturbing {name}[{i}]")
                numeric = (up - down) / (2.0 * h)
                a = analytic[name].reshape(-1)[i]
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                worst = max(worst, rel)
            errors[name] = worst
    store.zero_grads()
    return errors


def grad_check(f, store: ParamStore, h: float = 1e-5) -> float:
    """Max over all trainable parameter elements of the relative error."""
    detail = grad_check_detail(f, store, h)
    return max(detail.values()) if detail else 0.0
