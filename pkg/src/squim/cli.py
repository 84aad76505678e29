"""``squim`` command line: synth, oracle, train, estimate, eval, scatter.

Results go to stdout as TSV; the resolved configuration and diagnostics
go to stderr. Exit codes: 0 ok, 1 other failure, 2 bad arguments or a
length/rate mismatch, 3 missing or unreadable checkpoint, 4 malformed
config file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import train as te
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .metrics import LengthMismatch, si_sdr, stoi
from .model import ModelConfig, SquimObjective, init_params
from .signal import SampleRateMismatch, WavError, load_wav

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CHECKPOINT, EXIT_CONFIG = 0, 1, 2, 3, 4
PRESETS = {"tiny": ModelConfig.tiny, "desk": ModelConfig.desk, "full": ModelConfig}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def default_seed() -> int:
    raw = os.environ.get("SQUIM_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"SQUIM_SEED must be an integer, got {raw!r}", EXIT_USAGE) from None


def _show(args, extra: dict | None = None):
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    resolved.update(extra or {})
    print("# config " + json.dumps(resolved, sort_keys=True, default=str), file=sys.stderr)


def _checkpoint(path):
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise CliError(f"checkpoint not found: {path}", EXIT_CHECKPOINT) from None
    except CheckpointError as e:
        raise CliError(f"unreadable checkpoint {path}: {e}", EXIT_CHECKPOINT) from None


def _dataset(args):
    ds = te.load_dataset(args.data)
    if getattr(args, "pesq_labels", None):
        ds = te.with_pesq(ds, te.load_label_file(args.pesq_labels))
    return ds


# ---------------------------------------------------------------- commands


def cmd_synth(args):
    if args.snr_lo > args.snr_hi:
        raise CliError(f"--snr-lo {args.snr_lo} exceeds --snr-hi {args.snr_hi}", EXIT_USAGE)
    if args.n < 1 or args.dur <= 0:
        raise CliError("--n must be >= 1 and --dur > 0", EXIT_USAGE)
    _show(args)
    ds = te.synth_dataset(args.n, args.dur, (args.snr_lo, args.snr_hi), args.seed,
                          clean_dir=args.clean_dir, workers=args.workers)
    meta = {"seed": args.seed, "duration_s": args.dur, "snr_range": [args.snr_lo, args.snr_hi],
            "clean_dir": None if args.clean_dir is None else str(args.clean_dir)}
    out = te.save_dataset(ds, args.out_dir, meta)
    print(f"wrote {len(ds)} pairs to {out}", file=sys.stderr)
    print("id\tstoi\tsi_sdr\tsnr_db")
    for s in ds:
        print(f"{s.id}\t{s.labels.stoi:.6f}\t{s.labels.si_sdr:.6f}\t{s.snr_db:.6f}")


def cmd_oracle(args):
    _show(args)
    est, ref = load_wav(args.est), load_wav(args.ref)
    if args.metric in ("stoi", "all"):
        print(f"stoi\t{stoi(est, ref):.6f}")
    if args.metric in ("sisdr", "all"):
        print(f"si_sdr\t{si_sdr(est, ref):.6f}")


def _train_setup(args):
    values = {}
    if args.config is not None:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as e:
            raise CliError(f"cannot read config {args.config}: {e}", EXIT_CONFIG) from None
        try:
            values = te.parse_config(text)
        except te.ConfigError as e:
            raise CliError(f"malformed config {args.config}: {e}", EXIT_CONFIG) from None
    for key in ("lr", "batch", "epochs", "seed", "w1", "w2", "w3", "w0"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    values.setdefault("seed", default_seed())
    try:
        return te.split_config(values, PRESETS[args.preset]())
    except te.ConfigError as e:
        raise CliError(f"invalid configuration: {e}", EXIT_CONFIG) from None


def cmd_train(args):
    cfg, w, hyper = _train_setup(args)
    _show(args, {"model": cfg.as_dict(), "weights": vars(w), "hyper": vars(hyper)})
    if args.resume is not None:
        _checkpoint(args.resume)
    if hyper.epochs == 0 and args.resume is None:
        save_checkpoint(args.out, cfg, init_params(cfg, hyper.seed), {"train.epoch": 0.0})
        print(f"wrote initial checkpoint {args.out}", file=sys.stderr)
        return
    if args.data is None:
        raise CliError("--data is required when training for one or more epochs", EXIT_USAGE)
    res = te.train(_dataset(args), cfg, w, hyper, checkpoint_path=args.out, log_path=args.log,
                   resume=args.resume)
    print("epoch\tstep\tloss_total\tloss_stoi\tloss_pesq\tloss_sisdr\tloss_recon")
    for r in res.log:
        print("\t".join([str(r["epoch"]), str(r["step"])] + [f"{r[k]:.6f}" for k in
                        ("loss_total", "loss_stoi", "loss_pesq", "loss_sisdr", "loss_recon")]))


def cmd_estimate(args):
    ckpt = _checkpoint(args.checkpoint)
    _show(args, {"model": ckpt.config.as_dict()})
    model = SquimObjective(ckpt.config, ckpt.params)
    print("path\tstoi\tpesq\tsi_sdr")
    for path in args.wavs:
        s, p, d = model(load_wav(path))
        print(f"{path}\t{s:.6f}\t{p:.6f}\t{d:.6f}")


def cmd_eval(args):
    ckpt = _checkpoint(args.checkpoint)
    _show(args, {"model": ckpt.config.as_dict()})
    report, _ = te.evaluate_model(ckpt, _dataset(args))
    print("metric\tmae\tpcc\tsrcc\tn")
    for m in ("stoi", "pesq", "si_sdr"):
        st = report.get(m)
        if st is None:
            print(f"{m}\tNA\tNA\tNA\t0")
        else:
            print(f"{m}\t{st.mae:.6f}\t{st.pcc:.6f}\t{st.srcc:.6f}\t{st.n}")
    if args.json is not None:
        Path(args.json).write_text(json.dumps(te.report_dict(report), indent=1) + "\n", encoding="utf-8")


def cmd_scatter(args):
    ckpt = _checkpoint(args.checkpoint)
    _show(args, {"model": ckpt.config.as_dict()})
    n = te.export_scatter(ckpt, _dataset(args), args.out)
    print(f"rows\t{n}")


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="squim", description="Reference-free speech assessment toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def seeded(sp):
        sp.add_argument("--seed", type=int, default=None, help="default: $SQUIM_SEED or 0")

    s = sub.add_parser("synth", help="synthesize a labelled noisy/clean dataset")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--dur", type=float, default=1.0, help="clip length in seconds")
    s.add_argument("--snr-lo", type=float, default=te.DEFAULT_SNR_RANGE[0])
    s.add_argument("--snr-hi", type=float, default=te.DEFAULT_SNR_RANGE[1])
    s.add_argument("--out-dir", type=Path, required=True)
    s.add_argument("--clean-dir", type=Path, default=None)
    s.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    seeded(s)
    s.set_defaults(func=cmd_synth)

    o = sub.add_parser("oracle", help="intrusive STOI / SI-SDR of a WAV pair")
    o.add_argument("--est", type=Path, required=True)
    o.add_argument("--ref", type=Path, required=True)
    o.add_argument("--metric", choices=("stoi", "sisdr", "all"), default="all")
    o.set_defaults(func=cmd_oracle)

    t = sub.add_parser("train", help="train an estimator on a synthesized dataset")
    t.add_argument("--data", type=Path, default=None, help="directory written by 'synth'")
    t.add_argument("--pesq-labels", type=Path, default=None, help="id<TAB>pesq label file")
    t.add_argument("--config", type=Path, default=None, help="key = value config file")
    t.add_argument("--preset", choices=sorted(PRESETS), default="tiny")
    t.add_argument("--out", type=Path, required=True, help="checkpoint path")
    t.add_argument("--log", type=Path, default=None, help="JSON-lines training log")
    t.add_argument("--resume", type=Path, default=None)
    for key, typ in (("lr", float), ("batch", int), ("epochs", int), ("w1", float), ("w2", float),
                     ("w3", float), ("w0", float)):
        t.add_argument(f"--{key}", type=typ, default=None)
    seeded(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("estimate", help="reference-free scores for WAV files")
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("wavs", nargs="+", type=Path)
    e.set_defaults(func=cmd_estimate)

    v = sub.add_parser("eval", help="MAE/PCC/SRCC of a checkpoint on a dataset")
    v.add_argument("--checkpoint", type=Path, required=True)
    v.add_argument("--data", type=Path, required=True)
    v.add_argument("--pesq-labels", type=Path, default=None)
    v.add_argument("--json", type=Path, default=None, help="also write the report as JSON")
    v.set_defaults(func=cmd_eval)

    c = sub.add_parser("scatter", help="export id/metric/truth/estimate TSV")
    c.add_argument("--checkpoint", type=Path, required=True)
    c.add_argument("--data", type=Path, required=True)
    c.add_argument("--pesq-labels", type=Path, default=None)
    c.add_argument("--out", type=Path, required=True)
    c.set_defaults(func=cmd_scatter)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if args.command != "train" and getattr(args, "seed", 0) is None:
            args.seed = default_seed()
        args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (LengthMismatch, SampleRateMismatch) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, WavError, ValueError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
