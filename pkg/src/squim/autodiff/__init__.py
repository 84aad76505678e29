"""Small reverse-mode autodiff engine with the layers the estimator needs."""

from .gradcheck import grad_check, numeric_grad
from .nn import (
    auto_pool,
    blstm,
    chunk,
    chunk_layout,
    conv1d,
    lstm,
    multi_head_attention,
    overlap_counts,
    unchunk,
)
from .optim import ParamStore, adam_step, clip_grad_norm
from .tensor import (
    NonFiniteError,
    ShapeError,
    Tensor,
    abs_,
    add,
    build_tape,
    clip,
    concat,
    flip,
    frame,
    layer_norm,
    linear,
    matmul,
    mean,
    mul,
    no_grad,
    overlap_add,
    pad_last,
    prelu,
    relu,
    reshape,
    sigmoid,
    slice_,
    softmax,
    square,
    sub,
    sum_,
    tanh,
    transpose,
)

__all__ = [
    "NonFiniteError",
    "ParamStore",
    "ShapeError",
    "Tensor",
    "abs_",
    "adam_step",
    "add",
    "auto_pool",
    "blstm",
    "build_tape",
    "chunk",
    "chunk_layout",
    "clip",
    "clip_grad_norm",
    "concat",
    "conv1d",
    "flip",
    "frame",
    "grad_check",
    "layer_norm",
    "linear",
    "lstm",
    "matmul",
    "mean",
    "mul",
    "multi_head_attention",
    "no_grad",
    "numeric_grad",
    "overlap_add",
    "overlap_counts",
    "pad_last",
    "prelu",
    "relu",
    "reshape",
    "sigmoid",
    "slice_",
    "softmax",
    "square",
    "sub",
    "sum_",
    "tanh",
    "transpose",
    "unchunk",
]
