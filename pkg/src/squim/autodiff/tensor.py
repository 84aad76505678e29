"""Reverse-mode autodiff over numpy arrays.

Every primitive computes its forward value eagerly and, when any input
requires a gradient, attaches a closure that maps the output gradient to
input gradients. ``Tensor.backward`` orders the recorded graph
topologically and runs the closures once each in reverse order.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "__weakref__")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable leaf."""
        if grad is None:
            if self.size != 1:
                raise ShapeError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        tape = build_tape(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(tape):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # operator sugar; all route through the primitives below
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return slice_(self, idx)

    @property
    def T(self):
        return transpose(self)


def build_tape(root: Tensor) -> list[Tensor]:
    """Topological order of the graph feeding ``root`` (inputs first)."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(out: np.ndarray, op: str):
    # a sum is finite unless some entry is NaN/Inf (or it overflows; then check exactly)
    if not np.isfinite(out.sum()) and not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{op} produced a non-finite value")


def make(data, parents, backward, op) -> Tensor:
    """Wrap a primitive's forward result and register its backward rule."""
    _check_finite(data, op)
    out = Tensor(data)
    out.op = op
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _is_scalar(t: Tensor) -> bool:
    return t.size == 1


def _reduce_to(g: np.ndarray, like: Tensor) -> np.ndarray:
    if g.shape == like.shape:
        return g
    return np.asarray(g.sum()).reshape(like.shape)


def _binary_shapes(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (only scalar broadcasting)")


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "add")

    def backward(g):
        return _reduce_to(g, a), _reduce_to(g, b)

    return make(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "sub")

    def backward(g):
        return _reduce_to(g, a), _reduce_to(-g, b)

    return make(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "mul")

    def backward(g):
        return _reduce_to(g * b.data, a), _reduce_to(g * a.data, b)

    return make(a.data * b.data, (a, b), backward, "mul")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def _sigmoid(v: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return make(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return make(t, (x,), lambda g: (g * (1.0 - t * t),), "tanh")


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """x for x >= 0, slope * x otherwise; ``slope`` is a single learnable scalar."""
    if slope.size != 1:
        raise ShapeError(f"prelu slope must be a scalar, got shape {slope.shape}")
    a = float(slope.data.reshape(()))
    pos = x.data >= 0

    def backward(g):
        gs = np.asarray(np.sum(np.where(pos, 0.0, g * x.data))).reshape(slope.shape)
        return g * np.where(pos, 1.0, a), gs

    return make(np.where(pos, x.data, a * x.data), (x, slope), backward, "prelu")


def abs_(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return make(np.abs(x.data), (x,), lambda g: (g * sign,), "abs")


def square(x: Tensor) -> Tensor:
    return make(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data >= lo) & (x.data <= hi)
    return make(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,), "clip")


# ---------------------------------------------------------------- reductions


def sum_(x: Tensor, axis=None) -> Tensor:
    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return make(np.asarray(x.data.sum(axis=axis)), (x,), backward, "sum")


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.size if axis is None else x.shape[axis]
    return sum_(x, axis) * (1.0 / n)


# ---------------------------------------------------------------- structure


def reshape(x: Tensor, shape) -> Tensor:
    return make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    """Permute axes; ``None`` swaps the last two."""
    if axes is None:
        axes = list(range(x.ndim))
        axes[-2], axes[-1] = axes[-1], axes[-2]
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def concat(xs, axis=-1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    ax = axis % xs[0].ndim
    ref = list(xs[0].shape)
    for x in xs[1:]:
        other = list(x.shape)
        if len(other) != len(ref) or other[:ax] + other[ax + 1:] != ref[:ax] + ref[ax + 1:]:
            raise ShapeError(f"concat: incompatible shapes {[t.shape for t in xs]} on axis {axis}")
    splits = np.cumsum([x.shape[ax] for x in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=ax))

    return make(np.concatenate([x.data for x in xs], axis=ax), xs, backward, "concat")


def slice_(x: Tensor, idx) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return make(np.array(x.data[idx]), (x,), backward, "slice")


def flip(x: Tensor, axis: int) -> Tensor:
    return make(np.flip(x.data, axis).copy(), (x,), lambda g: (np.flip(g, axis).copy(),), "flip")


def pad_last(x: Tensor, amount: int) -> Tensor:
    """Zero-pad the trailing axis on the right."""
    if amount == 0:
        return x
    widths = [(0, 0)] * (x.ndim - 1) + [(0, amount)]
    n = x.shape[-1]
    return make(np.pad(x.data, widths), (x,), lambda g: (g[..., :n].copy(),), "pad")


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; a 2-D right operand is shared across leading axes of ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dimensions differ, {a.shape} @ {b.shape}")
    if b.ndim == 2 and a.ndim > 2:
        a2 = a.data.reshape(-1, a.shape[-1])
        out = (a2 @ b.data).reshape(a.shape[:-1] + (b.shape[-1],))

        def backward(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g @ b.data.T, a2.T @ g2)

        return make(out, (a, b), backward, "matmul")

    def backward(g):
        return (g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g)

    return make(a.data @ b.data, (a, b), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight (+ bias over the last axis); weight is [in, out]."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ weight.data
    if bias is not None:
        out = out + bias.data
    out = out.reshape(lead + (weight.shape[1],))

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g2 @ weight.data.T).reshape(x.shape)
        gw = x2.T @ g2
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make(out, parents, backward, "linear")


def softmax(x: Tensor, axis=-1, scale: float = 1.0) -> Tensor:
    """softmax(scale * x) along ``axis``, shifted by the max for stability."""
    s = x.data - x.data.max(axis=axis, keepdims=True)
    if scale != 1.0:
        s *= scale
    np.exp(s, out=s)
    s /= s.sum(axis=axis, keepdims=True)

    def backward(g):
        gx = g * s
        gx -= s * gx.sum(axis=axis, keepdims=True)
        if scale != 1.0:
            gx *= scale
        return (gx,)

    return make(s, (x,), backward, "softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, axis=-1, eps=1e-5) -> Tensor:
    """Normalise over ``axis`` then apply a per-feature gain and bias."""
    ax = axis % x.ndim
    n = x.shape[ax]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError(f"layer_norm: gain/bias {gain.shape}/{bias.shape} vs feature size {n}")
    shape = [1] * x.ndim
    shape[ax] = n
    gv, bv = gain.data.reshape(shape), bias.data.reshape(shape)
    mu = x.data.mean(axis=ax, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=ax, keepdims=True) + eps)
    xhat = xc * inv
    other = tuple(i for i in range(x.ndim) if i != ax)

    def backward(g):
        gh = g * gv
        gx = inv * (gh - gh.mean(axis=ax, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=ax, keepdims=True))
        return gx, (g * xhat).sum(axis=other), g.sum(axis=other)

    return make(xhat * gv + bv, (x, gain, bias), backward, "layer_norm")


# ---------------------------------------------------------------- framing


def n_frames(length: int, size: int, hop: int) -> int:
    return (length - size) // hop + 1


def frame(x: Tensor, size: int, hop: int) -> Tensor:
    """[..., T] -> [..., F, size] with F = floor((T - size)/hop) + 1, no padding."""
    T = x.shape[-1]
    if T < size:
        raise ShapeError(f"frame: signal length {T} shorter than frame size {size}")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    F = n_frames(T, size, hop)
    idx = np.arange(F)[:, None] * hop + np.arange(size)[None, :]

    def backward(g):
        return (_overlap_add(g, hop, T),)

    return make(x.data[..., idx], (x,), backward, "frame")


def _overlap_add(frames: np.ndarray, hop: int, out_len: int) -> np.ndarray:
    F, size = frames.shape[-2:]
    lead = frames.shape[:-2]
    K = -(-size // hop)
    if K * hop != size:
        frames = np.pad(frames, [(0, 0)] * (frames.ndim - 1) + [(0, K * hop - size)])
    pieces = frames.reshape(lead + (F, K, hop))
    out = np.zeros(lead + (max((F + K - 1) * hop, out_len),))
    # K strided passes instead of F frame-wise adds
    for k in range(K):
        out[..., k * hop:(k + F) * hop] += pieces[..., :, k, :].reshape(lead + (F * hop,))
    return out[..., :out_len]


def overlap_add(frames: Tensor, hop: int, out_len: int) -> Tensor:
    """Sum overlapping frames [..., F, size] into [..., out_len].

    The summed length (F-1)*hop + size is trimmed or zero-extended to
    ``out_len``; extension by a full hop or more is rejected since no
    frame layout with this hop produces it.
    """
    F, size = frames.shape[-2:]
    full = (F - 1) * hop + size
    if out_len < 1 or out_len >= full + hop:
        raise ShapeError(f"overlap_add: out_len {out_len} inconsistent with {F} frames of {size} at hop {hop}")
    idx = np.arange(F)[:, None] * hop + np.arange(size)[None, :]

    def backward(g):
        gp = g if g.shape[-1] >= full else np.pad(g, [(0, 0)] * (g.ndim - 1) + [(0, full - g.shape[-1])])
        return (gp[..., idx],)

    return make(_overlap_add(frames.data, hop, out_len), (frames,), backward, "overlap_add")
