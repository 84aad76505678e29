"""Reference-less estimator of STOI, PESQ and SI-SDR.

Waveform -> strided conv encoder -> chunked dual-path BLSTM trunk ->
three transformer branches (one per metric) with auto-pooling and a
scalar head. An optional linear decoder reconstructs the clean signal
from the shared representation for multi-task training.

All forward functions take a leading batch axis; unbatched inputs are
promoted to a batch of one.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .metrics import PESQ_MAX, PESQ_MIN, MetricTriple
from .signal import Waveform

BRANCHES = ("stoi", "pesq", "sisdr")
# sigmoid saturates to exactly 0/1 in float64 beyond ~37; keep the mapped scores strictly inside their ranges
LOGIT_LIMIT = 30.0


@dataclass(frozen=True)
class ModelConfig:
    N: int = 256
    P: int = 64
    R: int = 71
    h: int = 4
    d: int = 256
    d1: int = 1024
    num_dprnn_blocks: int = 4
    blstm_hidden: Optional[int] = None

    def __post_init__(self):
        if self.blstm_hidden is None:
            object.__setattr__(self, "blstm_hidden", self.N // 2)
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{f.name} must be a positive integer, got {v!r}")
        if self.P % 2:
            raise ValueError(f"P must be even so the hop is exactly P/2, got {self.P}")
        if self.R < 2:
            raise ValueError(f"R must be >= 2, got {self.R}")
        if self.d != self.N:
            raise ValueError(f"d ({self.d}) must equal N ({self.N}): the attention residual adds them")

    @property
    def hop(self) -> int:
        return self.P // 2

    @property
    def chunk_hop(self) -> int:
        return self.R // 2

    @classmethod
    def tiny(cls) -> "ModelConfig":
        return cls(N=8, P=4, R=4, h=2, d=8, d1=16, num_dprnn_blocks=2)

    @classmethod
    def desk(cls) -> "ModelConfig":
        """Tiny widths with 8 ms frames, small enough to overfit 1 s clips on a CPU."""
        return cls(N=8, P=128, R=22, h=2, d=8, d1=16, num_dprnn_blocks=2)

    def as_dict(self) -> dict:
        return asdict(self)

    def frames(self, T: int) -> int:
        if T < self.P:
            raise ValueError(f"input of {T} samples is shorter than one frame ({self.P})")
        return (T - self.P) // self.hop + 1

    def chunks(self, T: int) -> int:
        return ad.chunk_layout(self.frames(T), self.R, self.chunk_hop)[0]


# ---------------------------------------------------------------- parameters


def init_params(cfg: ModelConfig, seed: int = 0) -> ParamStore:
    """Deterministic initialisation, snapped to float32-representable values."""
    rng = np.random.default_rng(seed)
    store = ParamStore()

    def uniform(shape, fan_in):
        bound = np.sqrt(1.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape)

    def linear(prefix, n_in, n_out, bias=True):
        store.add(f"{prefix}.W", uniform((n_in, n_out), n_in))
        if bias:
            store.add(f"{prefix}.b", uniform((n_out,), n_in))

    def norm(prefix, n):
        store.add(f"{prefix}.gain", np.ones(n))
        store.add(f"{prefix}.bias", np.zeros(n))

    def blstm(prefix, n_in, hidden):
        for tag in ("f", "b"):
            store.add(f"{prefix}.W{tag}", uniform((n_in, 4 * hidden), n_in))
            store.add(f"{prefix}.U{tag}", uniform((hidden, 4 * hidden), hidden))
            b = np.zeros(4 * hidden)
            b[hidden:2 * hidden] = 1.0  # forget gate
            store.add(f"{prefix}.b{tag}", b)

    N, H = cfg.N, cfg.blstm_hidden
    store.add("encoder.kernel", uniform((N, 1, cfg.P), cfg.P))
    for b in range(1, cfg.num_dprnn_blocks + 1):
        for path in ("intra", "inter"):
            pre = f"trunk.block{b}.{path}"
            blstm(f"{pre}.blstm", N, H)
            linear(f"{pre}.proj", 2 * H, N)
            norm(f"{pre}.norm", N)
    linear("trunk.out", N, N)
    store.add("trunk.out.prelu", 0.25)
    for br in BRANCHES:
        pre = f"branch.{br}"
        for w in ("Wq", "Wk", "Wv"):
            store.add(f"{pre}.attn.{w}", uniform((N, cfg.h * cfg.d), N))
        store.add(f"{pre}.attn.Wo", uniform((cfg.h * cfg.d, cfg.d), cfg.h * cfg.d))
        norm(f"{pre}.norm1", cfg.d)
        linear(f"{pre}.ff1", cfg.d, cfg.d1)
        linear(f"{pre}.ff2", cfg.d1, cfg.d)
        norm(f"{pre}.norm2", cfg.d)
        store.add(f"{pre}.pool.alpha", 0.0)
        linear(f"{pre}.head1", cfg.d, cfg.d)
        store.add(f"{pre}.head1.prelu", 0.25)
        linear(f"{pre}.head2", cfg.d, 1)
    linear("decoder", N, cfg.P)
    store.round_to_float32()
    return store


# ---------------------------------------------------------------- forward pieces


def _batched(x: Tensor, rank: int) -> tuple[Tensor, bool]:
    if x.ndim == rank - 1:
        return ad.reshape(x, (1,) + x.shape), True
    if x.ndim != rank:
        raise ad.ShapeError(f"expected a {rank - 1}-D or batched {rank}-D tensor, got {x.shape}")
    return x, False


def _signal_tensor(y) -> Tensor:
    if isinstance(y, Waveform):
        return Tensor(y.samples)
    if isinstance(y, Tensor):
        return y
    return Tensor(np.asarray(y, dtype=np.float64))


def encoder_forward(y, cfg: ModelConfig, params: ParamStore) -> Tensor:
    """[B, T] -> [B, N, L] frames of ReLU(conv) features."""
    y = _signal_tensor(y)
    y, _ = _batched(y, 2)
    cfg.frames(y.shape[-1])
    return ad.relu(ad.conv1d(y, params["encoder.kernel"], cfg.hop))


def _sub_block(x: Tensor, params: ParamStore, prefix: str) -> Tensor:
    # x: [batch, steps, N] -> same shape, BLSTM + projection + layer norm (no residual)
    p = lambda n: params[f"{prefix}.{n}"]  # noqa: E731
    h = ad.blstm(x, (p("blstm.Wf"), p("blstm.Uf"), p("blstm.bf")), (p("blstm.Wb"), p("blstm.Ub"), p("blstm.bb")))
    h = ad.linear(h, p("proj.W"), p("proj.b"))
    return ad.layer_norm(h, p("norm.gain"), p("norm.bias"), axis=-1)


def dprnn_block_forward(U: Tensor, params: ParamStore, prefix: str) -> Tensor:
    """Intra-chunk then inter-chunk BLSTM sub-blocks with residuals; [B, N, S, R] in and out."""
    U, squeeze = _batched(U, 4)
    B, N, S, R = U.shape
    x = ad.reshape(ad.transpose(U, (0, 2, 3, 1)), (B * S, R, N))
    x = _sub_block(x, params, f"{prefix}.intra")
    U = ad.add(U, ad.transpose(ad.reshape(x, (B, S, R, N)), (0, 3, 1, 2)))
    x = ad.reshape(ad.transpose(U, (0, 3, 2, 1)), (B * R, S, N))
    x = _sub_block(x, params, f"{prefix}.inter")
    U = ad.add(U, ad.transpose(ad.reshape(x, (B, R, S, N)), (0, 3, 2, 1)))
    return ad.reshape(U, U.shape[1:]) if squeeze else U


def trunk_forward(y, cfg: ModelConfig, params: ParamStore) -> Tensor:
    """Encoder -> chunking -> DPRNN stack -> linear + PReLU -> overlap-add; returns Z [B, N, L]."""
    F = encoder_forward(y, cfg, params)
    L = F.shape[-1]
    U, _ = ad.chunk(F, cfg.R, cfg.chunk_hop)  # [B, N, S, R]
    for b in range(1, cfg.num_dprnn_blocks + 1):
        U = dprnn_block_forward(U, params, f"trunk.block{b}")
    x = ad.linear(ad.transpose(U, (0, 2, 3, 1)), params["trunk.out.W"], params["trunk.out.b"])
    x = ad.prelu(x, params["trunk.out.prelu"])
    return ad.unchunk(ad.transpose(x, (0, 3, 1, 2)), cfg.chunk_hop, L)


@dataclass
class BranchOutput:
    t: Tensor  # raw head output [B]
    s: Tensor  # score on the metric's scale [B]


def map_score(t: Tensor, branch: str) -> Tensor:
    if branch == "sisdr":
        return t
    sig = ad.sigmoid(ad.clip(t, -LOGIT_LIMIT, LOGIT_LIMIT))
    if branch == "stoi":
        return sig
    if branch == "pesq":
        return ad.add(ad.mul(sig, PESQ_MAX - PESQ_MIN), PESQ_MIN)
    raise ValueError(f"unknown branch {branch!r}")


def branch_forward(Z: Tensor, branch: str, cfg: ModelConfig, params: ParamStore) -> BranchOutput:
    """Transformer block, auto-pooling and scalar head for one metric."""
    if branch not in BRANCHES:
        raise ValueError(f"unknown branch {branch!r}; expected one of {BRANCHES}")
    Z, _ = _batched(Z, 3)
    p = lambda n: params[f"branch.{branch}.{n}"]  # noqa: E731
    zt = ad.transpose(Z, (0, 2, 1))  # [B, L, N]
    a = ad.multi_head_attention(zt, p("attn.Wq"), p("attn.Wk"), p("attn.Wv"), p("attn.Wo"), cfg.h)
    x = ad.layer_norm(ad.add(zt, a), p("norm1.gain"), p("norm1.bias"))
    f = ad.linear(ad.relu(ad.linear(x, p("ff1.W"), p("ff1.b"))), p("ff2.W"), p("ff2.b"))
    x = ad.layer_norm(ad.add(x, f), p("norm2.gain"), p("norm2.bias"))
    pooled = ad.auto_pool(x, p("pool.alpha"))  # [B, d]
    hid = ad.prelu(ad.linear(pooled, p("head1.W"), p("head1.b")), p("head1.prelu"))
    t = ad.reshape(ad.linear(hid, p("head2.W"), p("head2.b")), (Z.shape[0],))
    return BranchOutput(t, map_score(t, branch))


def decoder_forward(Z: Tensor, cfg: ModelConfig, params: ParamStore, length: int) -> Tensor:
    """Per-frame N -> P linear map and frame-level overlap-add to ``length`` samples."""
    Z, _ = _batched(Z, 3)
    frames = ad.linear(ad.transpose(Z, (0, 2, 1)), params["decoder.W"], params["decoder.b"])
    return ad.overlap_add(frames, cfg.hop, length)


@dataclass
class ModelOutput:
    stoi: Tensor
    pesq: Tensor
    si_sdr: Tensor
    z: Tensor
    zhat: Optional[Tensor] = None
    raw: Optional[dict] = None

    def triples(self) -> list[MetricTriple]:
        return [MetricTriple(float(a), float(b), float(c))
                for a, b, c in zip(self.stoi.data, self.pesq.data, self.si_sdr.data)]


def model_forward(y, cfg: ModelConfig, params: ParamStore, with_mtl: bool = False) -> ModelOutput:
    """Full estimator on y [T] or [B, T]; the decoder runs only when ``with_mtl``."""
    y = _signal_tensor(y)
    y, _ = _batched(y, 2)
    Z = trunk_forward(y, cfg, params)
    outs = {br: branch_forward(Z, br, cfg, params) for br in BRANCHES}
    zhat = decoder_forward(Z, cfg, params, y.shape[-1]) if with_mtl else None
    return ModelOutput(outs["stoi"].s, outs["pesq"].s, outs["sisdr"].s, Z, zhat,
                       {br: o.t for br, o in outs.items()})


class SquimObjective:
    """Callable estimator bundling a config with its parameters.

    >>> model = SquimObjective.initialise(ModelConfig.tiny(), seed=0)
    >>> stoi, pesq, si_sdr = model(waveform)  # doctest: +SKIP
    """

    def __init__(self, cfg: ModelConfig, params: ParamStore):
        self.cfg = cfg
        self.params = params

    @classmethod
    def initialise(cls, cfg: ModelConfig, seed: int = 0) -> "SquimObjective":
        return cls(cfg, init_params(cfg, seed))

    @classmethod
    def load(cls, path) -> "SquimObjective":
        from .checkpoint import load_checkpoint

        ckpt = load_checkpoint(path)
        return cls(ckpt.config, ckpt.params)

    def estimate(self, waveforms) -> list[MetricTriple]:
        single = isinstance(waveforms, Waveform)
        ws = [waveforms] if single else list(waveforms)
        out = []
        with ad.no_grad():
            for w in ws:
                out.extend(model_forward(w, self.cfg, self.params).triples())
        return out

    def __call__(self, waveform: Waveform) -> tuple[float, float, float]:
        t = self.estimate(waveform)[0]
        return t.stoi, t.pesq, t.si_sdr
