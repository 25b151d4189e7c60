"""Adam with bias-corrected moments."""

from __future__ import annotations

import numpy as np


def adam_step(param, grad, m, v, t, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
    """Apply one in-place Adam update to ``param`` (``m`` and ``v`` are updated too)."""
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    m *= beta1
    m += (1 - beta1) * grad
    v *= beta2
    v += (1 - beta2) * (grad * grad)
    # lr * m_hat / (sqrt(v_hat) + eps) with the corrections folded into scalars
    c2 = np.sqrt(1 - beta2 ** t)
    step = lr * c2 / (1 - beta1 ** t)
    denom = np.sqrt(v)
    denom += eps * c2
    param -= step * (m / denom)


class Adam:
    def __init__(self, params: dict, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(p) for k, p in params.items()}
        self.v = {k: np.zeros_like(p) for k, p in params.items()}
        self.t = 0

    def step(self, grads: dict):
        self.t += 1
        for k, p in self.params.items():
            adam_step(p, grads[k], self.m[k], self.v[k], self.t,
                      self.lr, self.beta1, self.beta2, self.eps)
