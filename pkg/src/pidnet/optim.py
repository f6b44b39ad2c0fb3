"""AdamW with decoupled weight decay, plus global-norm gradient clipping."""

from __future__ import annotations

import math

import numpy as np

from .params import ParamStore


class AdamW:
    """Standard bias-corrected AdamW; weight decay is applied directly to the
    parameter, never through the moment estimates."""

    def __init__(self, lr: float = 8e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 1e-4):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0

    def step(self, store: ParamStore):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for _, p in store.trainable_items():
            p.m[...] = self.beta1 * p.m + (1.0 - self.beta1) * p.grad
            p.v[...] = self.beta2 * p.v + (1.0 - self.beta2) * p.grad * p.grad
            m_hat = p.m / bc1
            v_hat = p.v / bc2
            p.value -= self.lr * (m_hat / (np.sqrt(v_hat) + self.eps)
                                  + self.weight_decay * p.value)


def reference_adamw_step(theta: float, grad: float, m: float, v: float, t: int,
                         lr: float, beta1: float = 0.9, beta2: float = 0.999,
                         eps: float = 1e-8, weight_decay: float = 1e-4):
    """Scalar single-step oracle mirroring AdamW.step, for tests."""
    m = beta1 * m + (1 - beta1) * grad
    v = beta2 * v + (1 - beta2) * grad * grad
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    theta = theta - lr * (m_hat / (math.sqrt(v_hat) + eps) + weight_decay * theta)
    return theta, m, v
