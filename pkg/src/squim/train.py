"""Synthetic labelled data, the multi-task loss, training and evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint, to_bytes
from .metrics import PESQ_MAX, PESQ_MIN, EvalReport, MetricTriple, evaluate, si_sdr, stoi
from .model import ModelConfig, init_params, model_forward
from .signal import DEFAULT_RATE, Waveform, load_wav, mix_at_snr, save_wav, synth_signal

DEFAULT_SNR_RANGE = (-15.0, 25.0)


class ConfigError(ValueError):
    pass


class LabelFileError(ValueError):
    pass


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class LossWeights:
    w1: float = 1.0  # STOI
    w2: float = 2.0  # PESQ
    w3: float = 0.5  # SI-SDR
    w0: float = 2.0  # clean-signal reconstruction

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{f.name} must be a finite non-negative weight, got {v}")

    def scaled(self, c: float) -> "LossWeights":
        return LossWeights(self.w1 * c, self.w2 * c, self.w3 * c, self.w0 * c)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 4e-4
    batch: int = 4
    epochs: int = 10
    clip: float = 5.0
    seed: int = 0
    loss_kind: str = "mae"

    def __post_init__(self):
        if self.loss_kind not in ("mae", "mse"):
            raise ValueError(f"loss_kind must be 'mae' or 'mse', got {self.loss_kind!r}")
        if self.batch < 1 or self.epochs < 0 or self.lr <= 0:
            raise ValueError("batch >= 1, epochs >= 0 and lr > 0 required")


@dataclass
class LabeledSample:
    degraded: Waveform
    clean: Waveform
    labels: MetricTriple
    id: str
    snr_db: Optional[float] = None

    def __post_init__(self):
        if len(self.degraded) != len(self.clean):
            raise ValueError(f"{self.id}: degraded and clean lengths differ")


# ---------------------------------------------------------------- data


def _clean_from_dir(files: list, duration_s: float, sample_rate: int, rng) -> Waveform:
    w = load_wav(files[int(rng.integers(len(files)))])
    if w.sample_rate != sample_rate:
        from .signal import resample

        w = resample(w, sample_rate)
    n = int(round(duration_s * sample_rate))
    x = w.samples
    if x.size >= n:
        start = int(rng.integers(0, x.size - n + 1))
        x = x[start:start + n]
    else:
        x = np.pad(x, (0, n - x.size))
    return Waveform(x, sample_rate)


def label_pair(degraded: Waveform, clean: Waveform, pesq: Optional[float] = None) -> MetricTriple:
    return MetricTriple(stoi(degraded, clean), pesq, si_sdr(degraded, clean))


def synth_sample(i: int, duration_s: float, snr_range, seed: int, sample_rate=DEFAULT_RATE,
                 clean_files=None) -> LabeledSample:
    rng = np.random.default_rng([seed, i])
    sub = rng.integers(0, 2**31, size=4)
    if clean_files:
        clean = _clean_from_dir(clean_files, duration_s, sample_rate, np.random.default_rng(sub[0]))
    else:
        clean = synth_signal("speech-like-am-noise", duration_s, sample_rate, seed=int(sub[0]))
    kind = "white-noise" if rng.random() < 0.5 else "pink-noise"
    noise = synth_signal(kind, duration_s + 0.5, sample_rate, seed=int(sub[1]))
    snr = float(rng.uniform(*snr_range))
    degraded = mix_at_snr(clean, noise, snr, seed=int(sub[2]))
    return LabeledSample(degraded, clean, label_pair(degraded, clean), f"s{seed}_{i:05d}", snr)


def synth_dataset(n: int, duration_s: float = 1.0, snr_range=DEFAULT_SNR_RANGE, seed: int = 0,
                  sample_rate: int = DEFAULT_RATE, clean_dir=None, workers: int = 1) -> list[LabeledSample]:
    """``n`` additive-noise mixtures labelled with the STOI and SI-SDR oracles.

    Clean signals are synthetic speech-like noise unless ``clean_dir``
    names a directory of WAV files. Sample i depends only on (seed, i).
    """
    lo, hi = snr_range
    if n < 1:
        raise ValueError("n must be >= 1")
    if lo > hi:
        raise ValueError(f"empty SNR range [{lo}, {hi}]")
    files = None
    if clean_dir is not None:
        files = sorted(Path(clean_dir).glob("*.wav"))
        if not files:
            raise FileNotFoundError(f"no .wav files in clean directory {clean_dir}")
    args = [(i, duration_s, (lo, hi), seed, sample_rate, files) for i in range(n)]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda a: synth_sample(*a), args))
    return [synth_sample(*a) for a in args]


def load_label_file(path) -> dict[str, float]:
    """Read a ``id<TAB>pesq`` TSV into a validated {id: score} map."""
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if not lines or lines[0].rstrip("\r") != "id\tpesq":
        raise LabelFileError(f"{path}: header must be 'id\\tpesq'")
    out = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.rstrip("\r").split("\t")
        if len(parts) != 2:
            raise LabelFileError(f"{path}:{lineno}: expected 2 columns, got {len(parts)}")
        sid, raw = parts
        try:
            score = float(raw)
        except ValueError:
            raise LabelFileError(f"{path}:{lineno}: bad score {raw!r}") from None
        if not PESQ_MIN <= score <= PESQ_MAX:
            raise LabelFileError(f"{path}:{lineno}: pesq {score} outside [{PESQ_MIN}, {PESQ_MAX}]")
        if sid in out:
            raise LabelFileError(f"{path}:{lineno}: duplicate id {sid!r}")
        out[sid] = score
    return out


def save_label_file(labels: dict, path):
    body = "".join(f"{k}\t{v!r}\n" for k, v in labels.items())
    Path(path).write_text("id\tpesq\n" + body, encoding="utf-8", newline="\n")


def with_pesq(dataset: Sequence[LabeledSample], labels: dict) -> list[LabeledSample]:
    return [replace(s, labels=replace(s.labels, pesq=labels.get(s.id))) for s in dataset]


LABELS_HEADER = "id\tstoi\tsi_sdr\tsnr_db"


def save_dataset(dataset: Sequence[LabeledSample], out_dir, meta: Optional[dict] = None) -> Path:
    """Write ``<id>_degraded.wav``/``<id>_clean.wav`` pairs, labels.tsv and manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [LABELS_HEADER]
    for s in dataset:
        save_wav(s.degraded, out / f"{s.id}_degraded.wav")
        save_wav(s.clean, out / f"{s.id}_clean.wav")
        snr = "" if s.snr_db is None else repr(s.snr_db)
        rows.append(f"{s.id}\t{s.labels.stoi!r}\t{s.labels.si_sdr!r}\t{snr}")
    (out / "labels.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8", newline="\n")
    manifest = {"n": len(dataset), "files": [[f"{s.id}_degraded.wav", f"{s.id}_clean.wav"] for s in dataset]}
    manifest.update(meta or {})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return out


def load_dataset(data_dir) -> list[LabeledSample]:
    """Read a directory written by :func:`save_dataset`.

    Labels come from labels.tsv; float32 WAV storage means a recomputed
    oracle label may differ from the stored one in the last few bits.
    """
    d = Path(data_dir)
    lines = (d / "labels.tsv").read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != LABELS_HEADER:
        raise LabelFileError(f"{d / 'labels.tsv'}: header must be {LABELS_HEADER!r}")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 4:
            raise LabelFileError(f"{d / 'labels.tsv'}:{lineno}: expected 4 columns")
        sid, st, sd, snr = parts
        out.append(LabeledSample(load_wav(d / f"{sid}_degraded.wav"), load_wav(d / f"{sid}_clean.wav"),
                                 MetricTriple(float(st), None, float(sd)), sid, float(snr) if snr else None))
    return out


# ---------------------------------------------------------------- loss


def _metric_loss(pred: Tensor, truth, mask, kind: str) -> Optional[Tensor]:
    # mean over the unmasked batch entries; None when nothing is labelled
    count = float(mask.sum())
    if count == 0:
        return None
    err = ad.sub(pred, Tensor(truth))
    err = ad.abs_(err) if kind == "mae" else ad.square(err)
    return ad.mul(ad.sum_(ad.mul(err, Tensor(mask))), 1.0 / count)


def total_loss(pred, zhat: Optional[Tensor], samples: Sequence[LabeledSample], w: LossWeights,
               loss_kind: str = "mae"):
    """Weighted multi-task loss for a batch.

    ``pred`` exposes ``stoi``, ``pesq`` and ``si_sdr`` tensors of shape [B].
    Returns (total, components) where components holds each unweighted
    term as a float (0.0 for a term with no labelled samples). Terms with
    zero weight are kept out of the graph.
    """
    B = len(samples)
    comps, terms = {}, []
    for name, key, weight in (("stoi", "stoi", w.w1), ("pesq", "pesq", w.w2), ("sisdr", "si_sdr", w.w3)):
        vals = [s.labels.get(key) for s in samples]
        mask = np.array([v is not None for v in vals], dtype=np.float64)
        truth = np.array([v if v is not None else 0.0 for v in vals], dtype=np.float64)
        p = getattr(pred, key)
        if p.shape != (B,):
            raise ad.ShapeError(f"{key} prediction has shape {p.shape}, expected ({B},)")
        term = _metric_loss(p, truth, mask, loss_kind)
        comps[name] = 0.0 if term is None else float(term.data)
        if term is not None and weight > 0:
            terms.append(ad.mul(term, weight))
    if zhat is not None:
        z = np.stack([s.clean.samples for s in samples])
        if zhat.shape != z.shape:
            raise ad.ShapeError(f"reconstruction shape {zhat.shape} vs reference {z.shape}")
        rec = ad.mean(ad.abs_(ad.sub(zhat, Tensor(z))))
        comps["recon"] = float(rec.data)
        if w.w0 > 0:
            terms.append(ad.mul(rec, w.w0))
    else:
        comps["recon"] = 0.0
    total = terms[0] if terms else Tensor(0.0)
    for t in terms[1:]:
        total = ad.add(total, t)
    comps["total"] = float(total.data)
    return total, comps


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    config: ModelConfig
    params: ParamStore
    log: list = field(default_factory=list)
    epoch: int = 0

    def checkpoint_bytes(self) -> bytes:
        return to_bytes(self.config, self.params, {"train.epoch": float(self.epoch)})


def _batch_signals(samples):
    return np.stack([s.degraded.samples for s in samples])


def train_step(store: ParamStore, cfg: ModelConfig, samples, w: LossWeights, hyper: TrainConfig):
    store.zero_grad()
    out = model_forward(_batch_signals(samples), cfg, store, with_mtl=w.w0 > 0)
    loss, comps = total_loss(out, out.zhat, samples, w, hyper.loss_kind)
    if not math.isfinite(comps["total"]):
        raise TrainingDiverged(f"non-finite loss at step {store.step + 1}: {comps}")
    if loss.requires_grad:
        loss.backward()
    grads = store.grads()
    norm = ad.clip_grad_norm(grads, hyper.clip)
    if not math.isfinite(norm):
        raise TrainingDiverged(f"non-finite gradient norm at step {store.step + 1}")
    ad.adam_step(store, grads, lr=hyper.lr)
    store.round_to_float32()
    return comps


def train(dataset: Sequence[LabeledSample], cfg: ModelConfig, w: LossWeights = LossWeights(),
          hyper: TrainConfig = TrainConfig(), checkpoint_path=None, log_path=None,
          resume=None, init_seed: Optional[int] = None) -> TrainResult:
    """Adam training with global-norm clipping; one JSON log line per epoch.

    Parameters and optimiser moments are kept on float32-representable
    values, so the float32 checkpoint captures the full training state and
    ``resume`` (a checkpoint path or object) continues bit-exactly.
    """
    if not dataset:
        raise ValueError("empty dataset")
    if resume is not None:
        ckpt = resume if isinstance(resume, Checkpoint) else load_checkpoint(resume)
        if ckpt.config != cfg:
            raise ConfigError(f"resume checkpoint config {ckpt.config} differs from {cfg}")
        store, start = ckpt.params, int(ckpt.extra.get("train.epoch", 0))
    else:
        store, start = init_params(cfg, hyper.seed if init_seed is None else init_seed), 0
    log = []
    log_file = open(log_path, "a" if resume is not None else "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(start, hyper.epochs):
            order = np.random.default_rng([hyper.seed, epoch]).permutation(len(dataset))
            sums, steps = {}, 0
            for b in range(0, len(order), hyper.batch):
                comps = train_step(store, cfg, [dataset[i] for i in order[b:b + hyper.batch]], w, hyper)
                for k, v in comps.items():
                    sums[k] = sums.get(k, 0.0) + v
                steps += 1
            rec = {"epoch": epoch + 1, "step": store.step}
            for key in ("total", "stoi", "pesq", "sisdr", "recon"):
                rec[f"loss_{key}"] = sums[key] / steps
            log.append(rec)
            if log_file:
                log_file.write(json.dumps(rec) + "\n")
                log_file.flush()
    finally:
        if log_file:
            log_file.close()
    result = TrainResult(cfg, store, log, max(start, hyper.epochs))
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, cfg, store, {"train.epoch": float(result.epoch)})
    return result


# ---------------------------------------------------------------- evaluation


def _resolve_model(checkpoint):
    if isinstance(checkpoint, (str, Path)):
        checkpoint = load_checkpoint(checkpoint)
    if isinstance(checkpoint, (Checkpoint, TrainResult)):
        return checkpoint.config, checkpoint.params
    cfg, params = checkpoint
    return cfg, params


def predict(checkpoint, dataset: Sequence[LabeledSample], batch: int = 8) -> list[MetricTriple]:
    cfg, params = _resolve_model(checkpoint)
    out = []
    with ad.no_grad():
        for b in range(0, len(dataset), batch):
            chunk = dataset[b:b + batch]
            lengths = {len(s.degraded) for s in chunk}
            if len(lengths) == 1:
                out.extend(model_forward(_batch_signals(chunk), cfg, params).triples())
            else:
                for s in chunk:
                    out.extend(model_forward(s.degraded, cfg, params).triples())
    return out


def evaluate_model(checkpoint, dataset: Sequence[LabeledSample], batch: int = 8):
    """(EvalReport, per-sample rows) for a model on a labelled dataset.

    Each row is {"id", "truth": MetricTriple, "estimate": MetricTriple};
    estimated PESQ is dropped for samples lacking a PESQ label.
    """
    est = predict(checkpoint, dataset, batch)
    truth = [s.labels for s in dataset]
    est = [e if t.pesq is not None else replace(e, pesq=None) for e, t in zip(est, truth)]
    rows = [{"id": s.id, "truth": t, "estimate": e} for s, t, e in zip(dataset, truth, est)]
    return evaluate(est, truth), rows


def scatter_rows(rows) -> list[tuple[str, str, float, float]]:
    out = []
    for r in rows:
        for m in ("stoi", "pesq", "si_sdr"):
            t, e = r["truth"].get(m), r["estimate"].get(m)
            if t is not None and e is not None:
                out.append((r["id"], m, t, e))
    return out


def export_scatter(checkpoint, dataset, path) -> int:
    """Write id/metric/truth/estimate TSV rows; returns the row count."""
    _, rows = evaluate_model(checkpoint, dataset)
    data = scatter_rows(rows)
    write_scatter(data, path)
    return len(data)


def write_scatter(data, path):
    lines = ["id\tmetric\ttruth\testimate"] + [f"{i}\t{m}\t{t!r}\t{e!r}" for i, m, t, e in data]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_scatter(path) -> list[tuple[str, str, float, float]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if lines[0] != "id\tmetric\ttruth\testimate":
        raise ValueError(f"{path}: unexpected header {lines[0]!r}")
    out = []
    for line in lines[1:]:
        i, m, t, e = line.split("\t")
        out.append((i, m, float(t), float(e)))
    return out


def report_dict(report: EvalReport) -> dict:
    return {m: (None if report.get(m) is None else asdict(report.get(m))) for m in ("stoi", "pesq", "si_sdr")} | {"n": report.n}


# ---------------------------------------------------------------- config files

_MODEL_KEYS = {f.name for f in fields(ModelConfig)}
_WEIGHT_KEYS = {f.name for f in fields(LossWeights)}
_HYPER_KEYS = {f.name for f in fields(TrainConfig)}


def parse_config(text: str) -> dict:
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _MODEL_KEYS | _WEIGHT_KEYS | _HYPER_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _convert(key, value, lineno)
    return out


def _convert(key, value, lineno):
    try:
        if key == "loss_kind":
            return value
        if key in _MODEL_KEYS or key in ("batch", "epochs", "seed"):
            return int(value)
        return float(value)
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value {value!r} for {key}") from None


def split_config(values: dict, base_model: ModelConfig = ModelConfig()):
    """(ModelConfig, LossWeights, TrainConfig) from parsed config values."""
    try:
        m = {k: v for k, v in values.items() if k in _MODEL_KEYS}
        if m and "blstm_hidden" not in m and "N" in m:
            m["blstm_hidden"] = None
        cfg = replace(base_model, **m)
        w = LossWeights(**{k: v for k, v in values.items() if k in _WEIGHT_KEYS})
        hyper = TrainConfig(**{k: v for k, v in values.items() if k in _HYPER_KEYS})
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    return cfg, w, hyper


def format_config(cfg: ModelConfig, w: LossWeights, hyper: TrainConfig) -> str:
    items = list(asdict(cfg).items()) + list(asdict(w).items()) + list(asdict(hyper).items())
    return "".join(f"{k} = {v}\n" for k, v in items)
