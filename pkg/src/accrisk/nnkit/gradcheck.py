"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable

import numpy as np


def relative_error(analytic, numeric, floor=1e-6):
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numeric_gradient(f: Callable[[], float], x: np.ndarray, eps=1e-5, indices=None):
    """Central differences of scalar ``f`` w.r.t. entries of ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for k in (range(flat.size) if indices is None else indices):
        old = flat[k]
        flat[k] = old + eps
        fp = f()
        flat[k] = old - eps
        fm = f()
        flat[k] = old
        gflat[k] = (fp - fm) / (2 * eps)
    return grad


def grad_check(model, batch, eps=1e-5, max_per_block=None, seed=0) -> dict:
    """Largest relative error between analytic and numeric gradients, per parameter block.

    ``model`` must expose ``parameters()`` (live arrays by name) and
    ``loss_and_grads(*batch, check=True)`` returning ``(loss, grads)`` without
    mutating running statistics. ``max_per_block`` samples that many entries
    from large blocks.
    """
    params = model.parameters()
    _, grads = model.loss_and_grads(*batch, check=True)
    grads = {k: v.copy() for k, v in grads.items()}
    rng = np.random.default_rng(seed)
    report = {}

    def f():
        return model.loss_and_grads(*batch, check=True, need_grads=False)[0]

    for name, p in params.items():
        if p.size == 0:
            continue
        idx = None
        if max_per_block is not None and p.size > max_per_block:
            idx = np.sort(rng.choice(p.size, max_per_block, replace=False))
        num = numeric_gradient(f, p, eps, idx)
        sel = slice(None) if idx is None else idx
        err = relative_error(grads[name].reshape(-1)[sel], num.reshape(-1)[sel])
        report[name] = float(err.max())
    return report
