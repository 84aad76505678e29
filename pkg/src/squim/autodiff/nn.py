"""Neural building blocks on top of the tensor primitives."""

from __future__ import annotations

import numpy as np

from .tensor import (
    ShapeError,
    Tensor,
    _sigmoid,
    concat,
    frame,
    make,
    matmul,
    mul,
    overlap_add,
    pad_last,
    reshape,
    softmax,
    sum_,
    transpose,
)


def conv1d(x: Tensor, kernel: Tensor, stride: int) -> Tensor:
    """Strided valid convolution of mono signals.

    x is [..., T], kernel is [N, 1, P]; the result is [..., N, L] with
    L = floor((T - P) / stride) + 1.
    """
    if kernel.ndim != 3 or kernel.shape[1] != 1:
        raise ShapeError(f"conv1d: kernel must be [N, 1, P], got {kernel.shape}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n, _, p = kernel.shape
    if x.shape[-1] < p:
        raise ShapeError(f"conv1d: input length {x.shape[-1]} < kernel size {p}")
    frames = frame(x, p, stride)  # [..., L, P]
    w = transpose(reshape(kernel, (n, p)))  # [P, N]
    return _swap_last(matmul(frames, w))


def _swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-2], axes[-1] = axes[-1], axes[-2]
    return transpose(x, axes)


# ---------------------------------------------------------------- recurrence


def lstm(x: Tensor, w_in: Tensor, w_rec: Tensor, bias: Tensor, reverse: bool = False) -> Tensor:
    """Single-direction LSTM over the step axis of x [B, steps, F] -> [B, steps, H].

    Gates are packed (input, forget, cell, output) along the 4H axis of
    ``w_in`` [F, 4H], ``w_rec`` [H, 4H] and ``bias`` [4H]. Initial hidden
    and cell states are zero.
    """
    B, T, F = x.shape
    H = w_rec.shape[0]
    if w_in.shape != (F, 4 * H) or w_rec.shape != (H, 4 * H) or bias.shape != (4 * H,):
        raise ShapeError(
            f"lstm: inconsistent shapes x={x.shape} w_in={w_in.shape} "
            f"w_rec={w_rec.shape} bias={bias.shape}"
        )
    U = w_rec.data
    xw = (x.data.reshape(-1, F) @ w_in.data + bias.data).reshape(B, T, 4 * H)
    order = range(T - 1, -1, -1) if reverse else range(T)

    gates = np.empty((B, T, 4 * H))
    cells = np.empty((B, T, H))
    tcells = np.empty((B, T, H))
    hs = np.empty((B, T, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in order:
        a = xw[:, t] + h @ U
        a[:, :2 * H] = _sigmoid(a[:, :2 * H])
        a[:, 2 * H:3 * H] = np.tanh(a[:, 2 * H:3 * H])
        a[:, 3 * H:] = _sigmoid(a[:, 3 * H:])
        c = a[:, H:2 * H] * c + a[:, :H] * a[:, 2 * H:3 * H]
        tc = np.tanh(c)
        h = a[:, 3 * H:] * tc
        gates[:, t], cells[:, t], tcells[:, t], hs[:, t] = a, c, tc, h

    def backward(g):
        dxw = np.empty((B, T, 4 * H))
        dU = np.zeros_like(U)
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        zeros = np.zeros((B, H))
        steps = list(order)
        for k in range(T - 1, -1, -1):
            t = steps[k]
            prev = steps[k - 1] if k > 0 else None
            a = gates[:, t]
            i, f, gg, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
            c_prev = cells[:, prev] if prev is not None else zeros
            h_prev = hs[:, prev] if prev is not None else zeros
            dh = g[:, t] + dh_next
            tc = tcells[:, t]
            dc = dc_next + dh * o * (1.0 - tc * tc)
            da = np.empty((B, 4 * H))
            da[:, :H] = dc * gg * i * (1.0 - i)
            da[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
            da[:, 2 * H:3 * H] = dc * i * (1.0 - gg * gg)
            da[:, 3 * H:] = dh * tc * o * (1.0 - o)
            dxw[:, t] = da
            dU += h_prev.T @ da
            dh_next = da @ U.T
            dc_next = dc * f
        d2 = dxw.reshape(-1, 4 * H)
        dx = (d2 @ w_in.data.T).reshape(B, T, F)
        dW = x.data.reshape(-1, F).T @ d2
        return dx, dW, dU, d2.sum(axis=0)

    return make(hs, (x, w_in, w_rec, bias), backward, "lstm")


def blstm(x: Tensor, fwd: tuple, bwd: tuple) -> Tensor:
    """Bidirectional LSTM: [steps, F] or [B, steps, F] -> [..., steps, 2H].

    ``fwd`` and ``bwd`` are (w_in, w_rec, bias) triples for each direction;
    outputs are concatenated forward-first on the feature axis.
    """
    squeeze = x.ndim == 2
    if squeeze:
        x = reshape(x, (1,) + x.shape)
    elif x.ndim != 3:
        raise ShapeError(f"blstm: expected [steps, F] or [B, steps, F], got {x.shape}")
    out = concat([lstm(x, *fwd), lstm(x, *bwd, reverse=True)], axis=-1)
    if squeeze:
        out = reshape(out, out.shape[1:])
    return out


# ---------------------------------------------------------------- attention


def _split_heads(x: Tensor, heads: int) -> Tensor:
    # [..., L, h*d] -> [..., h, L, d]
    lead, L, hd = x.shape[:-2], x.shape[-2], x.shape[-1]
    x = reshape(x, lead + (L, heads, hd // heads))
    k = len(lead)
    return transpose(x, tuple(range(k)) + (k + 1, k, k + 2))


def _merge_heads(x: Tensor) -> Tensor:
    # [..., h, L, d] -> [..., L, h*d]
    k = x.ndim - 3
    h, L, d = x.shape[-3:]
    x = transpose(x, tuple(range(k)) + (k + 1, k, k + 2))
    return reshape(x, x.shape[:k] + (L, h * d))


def multi_head_attention(z, wq, wk, wv, wo, heads: int, return_weights: bool = False):
    """Self-attention with Q = K = V = z, z being [..., L, N].

    wq/wk/wv are [N, h*d] with head i in columns i*d:(i+1)*d; wo is [h*d, d].
    Each head attends with Softmax(Q'K'^T / sqrt(d)) V'.
    """
    N = z.shape[-1]
    for name, w in (("wq", wq), ("wk", wk), ("wv", wv)):
        if w.ndim != 2 or w.shape[0] != N or w.shape[1] % heads:
            raise ShapeError(f"attention: {name} {w.shape} incompatible with input {z.shape}, {heads} heads")
    d = wq.shape[1] // heads
    if wo.shape != (heads * d, wo.shape[1]) or wk.shape != wq.shape or wv.shape != wq.shape:
        raise ShapeError(f"attention: projection shapes {wq.shape}/{wk.shape}/{wv.shape}/{wo.shape} disagree")
    q = _split_heads(matmul(z, wq), heads)
    k = _split_heads(matmul(z, wk), heads)
    v = _split_heads(matmul(z, wv), heads)
    weights = softmax(matmul(q, _swap_last(k)), axis=-1, scale=1.0 / np.sqrt(d))
    out = matmul(_merge_heads(matmul(weights, v)), wo)
    return (out, weights) if return_weights else out


def auto_pool(x: Tensor, alpha: Tensor) -> Tensor:
    """Softmax-weighted pooling over the step axis: [..., L, d] -> [..., d].

    Each feature column is weighted by softmax(alpha * column); alpha = 0
    gives the mean, large alpha approaches the max.
    """
    if alpha.size != 1:
        raise ShapeError(f"auto_pool: alpha must be a scalar, got {alpha.shape}")
    w = softmax(mul(alpha, x), axis=-2)
    return sum_(mul(x, w), axis=-2)


# ---------------------------------------------------------------- chunking


def chunk_layout(length: int, size: int, hop: int) -> tuple[int, int]:
    """(number of chunks, trailing zero padding) for a sequence of ``length``."""
    s = max(1, -(-(length - size) // hop) + 1)
    return s, (s - 1) * hop + size - length


def chunk(x: Tensor, size: int, hop: int) -> tuple[Tensor, int]:
    """[..., L] -> ([..., S, size], pad): zero-pad then split into overlapped chunks."""
    if size < 1 or hop < 1:
        raise ValueError("chunk size and hop must be >= 1")
    _, pad = chunk_layout(x.shape[-1], size, hop)
    return frame(pad_last(x, pad), size, hop), pad


def unchunk(chunks: Tensor, hop: int, out_len: int) -> Tensor:
    """Overlap-add chunks [..., S, size] back to [..., out_len] (padding trimmed)."""
    return overlap_add(chunks, hop, out_len)


def overlap_counts(length: int, size: int, hop: int) -> np.ndarray:
    """How many chunks cover each of the first ``length`` positions."""
    s, pad = chunk_layout(length, size, hop)
    counts = np.zeros((s - 1) * hop + size)
    for k in range(s):
        counts[k * hop:k * hop + size] += 1
    return counts[:length]
