"""Intrusive reference metrics (SI-SDR, STOI) and evaluation statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .signal import Waveform, resample

PESQ_MIN, PESQ_MAX = 1.0, 4.64
METRICS = ("stoi", "pesq", "si_sdr")

SI_SDR_EPS = 1e-12
SI_SDR_CLAMP = 60.0


class LengthMismatch(ValueError):
    pass


class DegenerateInput(ValueError):
    """Zero reference, zero variance or too few samples for a statistic."""


class InsufficientSpeech(ValueError):
    pass


@dataclass(frozen=True)
class MetricTriple:
    stoi: float
    pesq: Optional[float]
    si_sdr: float

    def __post_init__(self):
        if not 0.0 <= self.stoi <= 1.0:
            raise ValueError(f"stoi {self.stoi} outside [0, 1]")
        if self.pesq is not None and not PESQ_MIN <= self.pesq <= PESQ_MAX:
            raise ValueError(f"pesq {self.pesq} outside [{PESQ_MIN}, {PESQ_MAX}]")
        if not math.isfinite(self.si_sdr):
            raise ValueError("si_sdr must be finite")

    def get(self, metric: str) -> Optional[float]:
        return getattr(self, metric)


def _samples(w) -> np.ndarray:
    return w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)


def _check_pair(a, b):
    if isinstance(a, Waveform) and isinstance(b, Waveform) and a.sample_rate != b.sample_rate:
        raise LengthMismatch(f"sample rates differ: {a.sample_rate} vs {b.sample_rate}")
    x, y = _samples(a), _samples(b)
    if x.shape != y.shape:
        raise LengthMismatch(f"lengths differ: {x.size} vs {y.size}")
    return x, y


# ---------------------------------------------------------------- SI-SDR


def si_sdr(estimate, reference) -> float:
    """Scale-invariant SDR in dB, clamped to +/-60."""
    est, ref = _check_pair(estimate, reference)
    ref_energy = float(ref @ ref)
    if ref_energy == 0.0:
        raise DegenerateInput("reference has zero energy")
    alpha = float(est @ ref) / ref_energy
    target = alpha * ref
    residual = est - target
    ratio = (float(target @ target) + SI_SDR_EPS) / (float(residual @ residual) + SI_SDR_EPS)
    return float(np.clip(10.0 * math.log10(ratio), -SI_SDR_CLAMP, SI_SDR_CLAMP))


# ---------------------------------------------------------------- STOI

STOI_RATE = 10000
STOI_FRAME = 256  # 25.6 ms
STOI_NFFT = 512
STOI_BANDS = 15
STOI_MIN_FREQ = 150.0
STOI_SEGMENT = 30  # frames, 384 ms
STOI_BETA = -15.0  # dB lower bound of signal-to-distortion
STOI_DYN_RANGE = 40.0
_EPS = np.finfo(np.float64).eps


def third_octave_matrix(fs=STOI_RATE, nfft=STOI_NFFT, bands=STOI_BANDS, min_freq=STOI_MIN_FREQ):
    """Binary [bands, nfft/2+1] matrix grouping FFT bins into 1/3-octave bands."""
    f = np.linspace(0, fs, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(bands, dtype=np.float64)
    lo = min_freq * 2.0 ** ((2 * k - 1) / 6)
    hi = min_freq * 2.0 ** ((2 * k + 1) / 6)
    obm = np.zeros((bands, f.size))
    for i in range(bands):
        a = int(np.argmin((f - lo[i]) ** 2))
        b = int(np.argmin((f - hi[i]) ** 2))
        obm[i, a:b] = 1.0
    return obm


def _hann(n: int) -> np.ndarray:
    return np.hanning(n + 2)[1:-1]


def _frames(x: np.ndarray, size: int, hop: int) -> np.ndarray:
    starts = np.arange(0, x.size - size, hop)
    return x[starts[:, None] + np.arange(size)[None, :]]


def remove_silent_frames(x: np.ndarray, y: np.ndarray, dyn_range=STOI_DYN_RANGE,
                         size=STOI_FRAME, hop=STOI_FRAME // 2):
    """Drop frames of ``x`` more than ``dyn_range`` dB below its loudest frame.

    The same frames are dropped from ``y``; both are re-synthesised by
    overlap-adding the surviving windowed frames.
    """
    w = _hann(size)
    xf, yf = _frames(x, size, hop) * w, _frames(y, size, hop) * w
    if xf.shape[0] == 0:
        return x[:0], y[:0]
    energy = 20.0 * np.log10(np.linalg.norm(xf, axis=1) + _EPS)
    keep = energy > energy.max() - dyn_range
    xf, yf = xf[keep], yf[keep]
    n = xf.shape[0]
    xs, ys = np.zeros((n - 1) * hop + size), np.zeros((n - 1) * hop + size)
    for i in range(n):
        xs[i * hop:i * hop + size] += xf[i]
        ys[i * hop:i * hop + size] += yf[i]
    return xs, ys


def _tob_envelopes(x: np.ndarray, obm: np.ndarray) -> np.ndarray:
    fr = _frames(x, STOI_FRAME, STOI_FRAME // 2) * _hann(STOI_FRAME)
    spec = np.fft.rfft(fr, n=STOI_NFFT, axis=1)
    return np.sqrt(obm @ (np.abs(spec) ** 2).T)  # [bands, frames]


def stoi(degraded, clean) -> float:
    """Short-time objective intelligibility of ``degraded`` against ``clean``, in [0, 1]."""
    _check_pair(degraded, clean)
    if isinstance(clean, Waveform):
        if clean.sample_rate != STOI_RATE:
            clean, degraded = resample(clean, STOI_RATE), resample(degraded, STOI_RATE)
        x, y = clean.samples, degraded.samples
    else:
        x, y = np.asarray(clean, dtype=np.float64), np.asarray(degraded, dtype=np.float64)
    x, y = remove_silent_frames(x, y)
    obm = third_octave_matrix()
    if x.size <= STOI_FRAME:
        raise InsufficientSpeech("no speech left after silent-frame removal")
    xt, yt = _tob_envelopes(x, obm), _tob_envelopes(y, obm)
    frames = xt.shape[1]
    if frames < STOI_SEGMENT:
        raise InsufficientSpeech(
            f"{frames} frames after silence removal; need {STOI_SEGMENT} (384 ms)"
        )
    idx = np.arange(STOI_SEGMENT, frames + 1)[:, None] + np.arange(-STOI_SEGMENT, 0)[None, :]
    xs = np.transpose(xt[:, idx], (1, 0, 2))  # [segments, bands, 30]
    ys = np.transpose(yt[:, idx], (1, 0, 2))
    scale = np.linalg.norm(xs, axis=2, keepdims=True) / (np.linalg.norm(ys, axis=2, keepdims=True) + _EPS)
    clip = 10.0 ** (-STOI_BETA / 20.0)
    yp = np.minimum(ys * scale, xs * (1.0 + clip))
    yp = yp - yp.mean(axis=2, keepdims=True)
    xc = xs - xs.mean(axis=2, keepdims=True)
    yp /= np.linalg.norm(yp, axis=2, keepdims=True) + _EPS
    xc /= np.linalg.norm(xc, axis=2, keepdims=True) + _EPS
    d = float(np.sum(yp * xc) / (xs.shape[0] * xs.shape[1]))
    return float(np.clip(d, 0.0, 1.0))


# ---------------------------------------------------------------- statistics


def _vectors(a, b, min_len=1):
    x, y = np.asarray(a, dtype=np.float64).ravel(), np.asarray(b, dtype=np.float64).ravel()
    if x.size != y.size:
        raise LengthMismatch(f"lengths differ: {x.size} vs {y.size}")
    if x.size < min_len:
        raise DegenerateInput(f"need at least {min_len} values, got {x.size}")
    return x, y


def mae(pred, truth) -> float:
    p, t = _vectors(pred, truth)
    return float(np.mean(np.abs(p - t)))


def pcc(a, b) -> float:
    x, y = _vectors(a, b, min_len=2)
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = float(xc @ xc), float(yc @ yc)
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInput("zero variance: correlation undefined")
    return float(np.clip((xc @ yc) / math.sqrt(sx * sy), -1.0, 1.0))


def rankdata(x) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    starts = np.flatnonzero(np.r_[True, sx[1:] != sx[:-1]])
    ends = np.r_[starts[1:], sx.size]
    avg = (starts + ends + 1) / 2.0  # mean of 1-based positions start+1 .. end
    ranks = np.empty(x.size)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def srcc(a, b) -> float:
    x, y = _vectors(a, b, min_len=2)
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateInput("constant input: rank correlation undefined")
    return pcc(rankdata(x), rankdata(y))


@dataclass(frozen=True)
class MetricStats:
    mae: float
    pcc: float
    srcc: float
    n: int


@dataclass(frozen=True)
class EvalReport:
    stoi: Optional[MetricStats]
    pesq: Optional[MetricStats]
    si_sdr: Optional[MetricStats]
    n: int

    def get(self, metric: str) -> Optional[MetricStats]:
        return getattr(self, metric)

    def cells(self) -> dict:
        """Flat {"stoi.mae": ..., ...}; absent metrics map to None."""
        out = {}
        for m in METRICS:
            s = self.get(m)
            for stat in ("mae", "pcc", "srcc"):
                out[f"{m}.{stat}"] = None if s is None else getattr(s, stat)
        out["n"] = self.n
        return out


def evaluate(pred: Sequence[MetricTriple], truth: Sequence[MetricTriple]) -> EvalReport:
    """MAE / PCC / SRCC per metric; STOI MAE is reported in percent.

    PESQ is scored over the pairs where both sides carry a value and is
    absent from the report when no such pair exists.
    """
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions for {len(truth)} references")
    if not pred:
        raise DegenerateInput("nothing to evaluate")
    stats = {}
    for m in METRICS:
        pairs = [(p.get(m), t.get(m)) for p, t in zip(pred, truth)
                 if p.get(m) is not None and t.get(m) is not None]
        if not pairs:
            stats[m] = None
            continue
        ps, ts = zip(*pairs)
        err = mae(ps, ts) * (100.0 if m == "stoi" else 1.0)
        stats[m] = MetricStats(err, pcc(ps, ts), srcc(ps, ts), len(pairs))
    return EvalReport(stats["stoi"], stats["pesq"], stats["si_sdr"], len(pred))
