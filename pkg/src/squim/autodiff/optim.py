from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .tensor import ShapeError, Tensor


class ParamStore:
    """Named trainable tensors plus their Adam moment buffers."""

    def __init__(self):
        self.params: OrderedDict[str, Tensor] = OrderedDict()
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def items(self):
        return self.params.items()

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self.params if n.startswith(prefix)]

    def num_values(self) -> int:
        return int(sum(t.size for t in self.params.values()))

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        """Current gradients, zeros where a parameter was not reached."""
        return {n: (t.grad if t.grad is not None else np.zeros_like(t.data)) for n, t in self.params.items()}

    def round_to_float32(self):
        """Snap parameters and moments onto float32-representable values."""
        for n, t in self.params.items():
            t.data = t.data.astype(np.float32).astype(np.float64)
            self.m[n] = self.m[n].astype(np.float32).astype(np.float64)
            self.v[n] = self.v[n].astype(np.float32).astype(np.float64)

    def copy(self) -> "ParamStore":
        other = ParamStore()
        for n, t in self.params.items():
            other.add(n, t.data.copy())
            other.m[n] = self.m[n].copy()
            other.v[n] = self.v[n].copy()
        other.step = self.step
        return other


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm is not None and total > max_norm:
        scale = max_norm / total
        for n in grads:
            grads[n] = grads[n] * scale
    return total


def adam_step(store: ParamStore, grads=None, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update applied in place."""
    if grads is None:
        grads = store.grads()
    for n, g in grads.items():
        if g.shape != store.params[n].shape:
            raise ShapeError(f"adam_step: gradient for {n!r} has shape {g.shape}, parameter {store.params[n].shape}")
    store.step += 1
    c1 = 1.0 - beta1 ** store.step
    c2 = 1.0 - beta2 ** store.step
    for n, g in grads.items():
        m = beta1 * store.m[n] + (1.0 - beta1) * g
        v = beta2 * store.v[n] + (1.0 - beta2) * g * g
        store.m[n], store.v[n] = m, v
        p = store.params[n]
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)
