"""Waveform container, WAV I/O, resampling, SNR mixing and test-signal synthesis."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

DEFAULT_RATE = 16000

# resampler constants, fixed so oracle values reproduce across machines
KAISER_BETA = 14.77
ZERO_CROSSINGS = 64


class WavError(ValueError):
    """Base class for WAV decoding problems."""


class MalformedWavError(WavError):
    pass


class MultiChannelError(WavError):
    def __init__(self, channels):
        super().__init__(f"multi-channel unsupported ({channels} channels)")


class UnsupportedEncodingError(WavError):
    pass


class SampleRateMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate: int = DEFAULT_RATE

    def __post_init__(self):
        s = np.ascontiguousarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size < 1:
            raise ValueError(f"waveform must be a non-empty 1-D array, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("waveform contains NaN or Inf")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def _as_waveform(w, sample_rate=DEFAULT_RATE) -> Waveform:
    return w if isinstance(w, Waveform) else Waveform(np.asarray(w), sample_rate)


# ---------------------------------------------------------------- WAV files


def load_wav(path) -> Waveform:
    """Read a mono PCM16 or float32 RIFF/WAVE file."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise MalformedWavError(f"{path}: not a RIFF/WAVE file")
    pos, fmt, data = 12, None, None
    while pos + 8 <= len(raw):
        cid, size = raw[pos:pos + 4], struct.unpack("<I", raw[pos + 4:pos + 8])[0]
        body = raw[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise MalformedWavError(f"{path}: truncated {cid!r} chunk")
        if cid == b"fmt ":
            if size < 16:
                raise MalformedWavError(f"{path}: fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", body[:16])
            if size >= 26:
                # WAVE_FORMAT_EXTENSIBLE: the sub-format GUID starts with the real tag
                fmt += struct.unpack("<H", body[24:26])
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None:
        raise MalformedWavError(f"{path}: missing fmt or data chunk")
    tag, channels, rate, _, _, bits = fmt[:6]
    if tag == 0xFFFE and len(fmt) > 6:
        tag = fmt[6]
    if channels != 1:
        raise MultiChannelError(channels)
    if rate == 0:
        raise MalformedWavError(f"{path}: zero sample rate")
    if tag == 1 and bits == 16:
        x = np.frombuffer(data[: len(data) // 2 * 2], dtype="<i2").astype(np.float64) / 32768.0
    elif tag == 3 and bits == 32:
        x = np.frombuffer(data[: len(data) // 4 * 4], dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedEncodingError(f"{path}: format tag {tag:#x} with {bits}-bit samples")
    return Waveform(x, rate)


def save_wav(w: Waveform, path) -> None:
    """Write a mono 32-bit float WAV.

    Samples are stored as float32, so a round trip is exact for any
    waveform whose samples are float32-representable.
    """
    payload = np.asarray(w.samples, dtype="<f4").tobytes()
    fmt = struct.pack("<HHIIHH", 3, 1, w.sample_rate, w.sample_rate * 4, 4, 32)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


def save_wav_pcm16(w: Waveform, path) -> None:
    q = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = q.tobytes()
    fmt = struct.pack("<HHIIHH", 1, 1, w.sample_rate, w.sample_rate * 2, 2, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


# ---------------------------------------------------------------- mixing


def power(x: np.ndarray) -> float:
    return float(np.mean(np.square(x)))


def snr_gain(p_clean: float, p_noise: float, snr_db: float) -> float:
    return math.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))


def noise_segment(clean_len: int, noise: np.ndarray, seed=None) -> np.ndarray:
    """The stretch of ``noise`` used against a clean signal of ``clean_len`` samples."""
    if noise.size < clean_len:
        raise ValueError(f"noise ({noise.size} samples) shorter than clean ({clean_len})")
    start = 0
    if seed is not None and noise.size > clean_len:
        start = int(np.random.default_rng(seed).integers(0, noise.size - clean_len + 1))
    return noise[start:start + clean_len]


def mix_at_snr(clean: Waveform, noise: Waveform, snr_db: float, seed=None) -> Waveform:
    """clean + g * noise with g chosen so the components sit exactly ``snr_db`` apart.

    Noise longer than the clean signal is cut at an offset drawn from
    ``seed`` (offset 0 when ``seed`` is None).
    """
    if not math.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite, got {snr_db}")
    if clean.sample_rate != noise.sample_rate:
        raise SampleRateMismatch(f"clean at {clean.sample_rate} Hz, noise at {noise.sample_rate} Hz")
    n = noise_segment(len(clean), noise.samples, seed)
    pc, pn = power(clean.samples), power(n)
    if pc == 0.0:
        raise ValueError("clean signal has zero power")
    if pn == 0.0:
        raise ValueError("noise has zero power")
    g = snr_gain(pc, pn, snr_db)
    return Waveform(clean.samples + g * n, clean.sample_rate)


# ---------------------------------------------------------------- resampling


def _kaiser(u: np.ndarray, beta: float) -> np.ndarray:
    inside = np.abs(u) <= 1.0
    arg = np.sqrt(np.clip(1.0 - u * u, 0.0, None))
    return np.where(inside, np.i0(beta * arg) / np.i0(beta), 0.0)


def polyphase_filters(up: int, down: int, beta=KAISER_BETA, zeros=ZERO_CROSSINGS):
    """Kaiser-windowed sinc taps for each of the ``up`` output phases.

    Returns (taps [up, 2W+1], offsets [up], W). Output sample n reads
    input samples offsets[n % up] + n // up * down - W .. + W.
    """
    cutoff = min(1.0, up / down)
    half = int(math.ceil(zeros / cutoff))
    k = np.arange(-half, half + 1)
    phases = np.arange(up)
    base = (phases * down) // up
    frac = (phases * down) / up - base  # in [0, 1)
    dist = base[:, None] + k[None, :] - (base + frac)[:, None]
    taps = cutoff * np.sinc(cutoff * dist) * _kaiser(dist * cutoff / zeros, beta)
    return taps, base, half


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Polyphase windowed-sinc resampling to ``target_rate``.

    Output length is round(T * target / source); samples outside the
    input are treated as zero.
    """
    target_rate = int(target_rate)
    if target_rate <= 0:
        raise ValueError(f"target rate must be positive, got {target_rate}")
    if target_rate == w.sample_rate:
        return Waveform(w.samples.copy(), w.sample_rate)
    ratio = Fraction(target_rate, w.sample_rate)
    up, down = ratio.numerator, ratio.denominator
    T = len(w)
    n_out = int(round(T * target_rate / w.sample_rate))
    taps, base, half = polyphase_filters(up, down)
    width = 2 * half + 1
    x = np.concatenate([np.zeros(half), w.samples, np.zeros(half + down + 1)])
    windows = np.lib.stride_tricks.sliding_window_view(x, width)
    y = np.empty(n_out)
    for p in range(min(up, n_out)):
        count = len(range(p, n_out, up))
        y[p::up] = windows[base[p]::down][:count] @ taps[p]
    return Waveform(y, target_rate)


# ---------------------------------------------------------------- synthesis

SIGNAL_KINDS = ("sine", "white-noise", "pink-noise", "speech-like-am-noise")


def _pink(n: int, rng: np.random.Generator) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(spec.size, dtype=np.float64)
    f[0] = 1.0
    x = np.fft.irfft(spec / np.sqrt(f), n)
    return x - x.mean()


def _normalise(x: np.ndarray, rms: float) -> np.ndarray:
    return x * (rms / math.sqrt(power(x)))


def synth_signal(kind: str, duration_s: float, sample_rate: int = DEFAULT_RATE, seed: int = 0,
                 freq: float = 440.0, rms: float = 0.1) -> Waveform:
    """Deterministic test signal of ``duration_s`` seconds.

    ``speech-like-am-noise`` is pink noise under a 4 Hz raised-sine
    envelope, a crude stand-in for the syllabic rhythm of speech.
    """
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    n = int(round(duration_s * sample_rate))
    if n < 1:
        raise ValueError("duration too short for one sample")
    rng = np.random.default_rng(seed)
    t = np.arange(n) / sample_rate
    if kind == "sine":
        x = math.sqrt(2.0) * rms * np.sin(2 * np.pi * freq * t)
        return Waveform(x, sample_rate)
    if kind == "white-noise":
        x = rng.standard_normal(n)
    elif kind == "pink-noise":
        x = _pink(n, rng)
    elif kind == "speech-like-am-noise":
        phase = rng.uniform(0, 2 * np.pi)
        env = 0.5 * (1.0 + np.sin(2 * np.pi * 4.0 * t + phase)) ** 2
        x = _pink(n, rng) * env
    else:
        raise ValueError(f"unknown signal kind {kind!r}; expected one of {SIGNAL_KINDS}")
    return Waveform(_normalise(x, rms), sample_rate)
