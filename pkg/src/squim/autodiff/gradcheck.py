from __future__ import annotations

import numpy as np

from .tensor import Tensor


def numeric_grad(f, param: Tensor, index) -> float:
    """Central difference of scalar ``f()`` with respect to one entry of ``param``."""
    theta = param.data[index]
    h = 1e-5 * max(1.0, abs(theta))
    param.data[index] = theta + h
    up = float(f().data)
    param.data[index] = theta - h
    down = float(f().data)
    param.data[index] = theta
    return (up - down) / (2.0 * h)


def grad_check(f, params, max_entries=None, seed=0) -> float:
    """Largest relative error between autodiff and finite-difference gradients.

    ``f`` is a zero-argument callable returning a scalar Tensor built from
    ``params``. With ``max_entries`` only that many randomly chosen entries
    of each parameter are probed.
    """
    params = list(params)
    for p in params:
        p.grad = None
    f().backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = np.arange(p.size)
        if max_entries is not None and p.size > max_entries:
            flat = rng.choice(p.size, size=max_entries, replace=False)
        for k in flat:
            idx = np.unravel_index(k, p.shape)
            g_ad = float(ga[idx])
            g_fd = numeric_grad(f, p, idx)
            denom = max(abs(g_ad), abs(g_fd), 1e-8)
            worst = max(worst, abs(g_ad - g_fd) / denom)
    return worst
