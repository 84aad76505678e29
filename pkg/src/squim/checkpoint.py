"""Binary checkpoint format.

Layout, all integers little-endian u32::

    b"SQMC" | version | n_config | (name_len, utf8 name, value) * n_config
            | n_tensors | (name_len, utf8 name, rank, dims..., f32 payload) * n_tensors

Model parameters carry their own names. Optimiser state rides along as
extra tensors under the ``optim.`` prefix and training progress under
``train.``, so a file written mid-training can resume exactly.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .autodiff import ParamStore
from .model import ModelConfig

MAGIC = b"SQMC"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    params: ParamStore
    extra: dict = field(default_factory=dict)


def _u32(v: int) -> bytes:
    return struct.pack("<I", v)


def _name(s: str) -> bytes:
    b = s.encode("utf-8")
    return _u32(len(b)) + b


def tensors_for(store: ParamStore, with_optimizer: bool = True) -> dict[str, np.ndarray]:
    out = {n: t.data for n, t in store.items()}
    if with_optimizer:
        for n in store:
            out[f"optim.m.{n}"] = store.m[n]
            out[f"optim.v.{n}"] = store.v[n]
        out["optim.step"] = np.asarray(float(store.step))
    return out


def to_bytes(cfg: ModelConfig, store: ParamStore, extra=None, with_optimizer=True) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC + _u32(VERSION))
    cfg_items = [(f.name, getattr(cfg, f.name)) for f in fields(cfg)]
    buf.write(_u32(len(cfg_items)))
    for k, v in cfg_items:
        buf.write(_name(k) + _u32(int(v)))
    tensors = tensors_for(store, with_optimizer)
    for k, v in (extra or {}).items():
        tensors[k] = np.asarray(v, dtype=np.float64)
    buf.write(_u32(len(tensors)))
    for k, v in tensors.items():
        a = np.asarray(v)
        buf.write(_name(k) + _u32(a.ndim) + b"".join(_u32(d) for d in a.shape))
        buf.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
    return buf.getvalue()


def save_checkpoint(path, cfg: ModelConfig, store: ParamStore, extra=None, with_optimizer=True):
    Path(path).write_bytes(to_bytes(cfg, store, extra, with_optimizer))


class _Reader:
    def __init__(self, raw: bytes):
        self.raw, self.pos = raw, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError("truncated checkpoint")
        b = self.raw[self.pos:self.pos + n]
        self.pos += n
        return b

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def name(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def from_bytes(raw: bytes) -> Checkpoint:
    r = _Reader(raw)
    if r.take(4) != MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    cfg_vals = {}
    for _ in range(r.u32()):
        k = r.name()
        cfg_vals[k] = r.u32()
    known = {f.name for f in fields(ModelConfig)}
    unknown = set(cfg_vals) - known
    if unknown:
        raise CheckpointError(f"unknown config fields {sorted(unknown)}")
    cfg = ModelConfig(**cfg_vals)
    tensors = {}
    for _ in range(r.u32()):
        k = r.name()
        shape = tuple(r.u32() for _ in range(r.u32()))
        count = int(np.prod(shape)) if shape else 1
        tensors[k] = np.frombuffer(r.take(4 * count), dtype="<f4").astype(np.float64).reshape(shape)
    if r.pos != len(raw):
        raise CheckpointError("trailing bytes after last tensor")
    store = ParamStore()
    for k, v in tensors.items():
        if not k.startswith(("optim.", "train.")):
            store.add(k, v)
    for k in store:
        if f"optim.m.{k}" in tensors:
            store.m[k] = tensors[f"optim.m.{k}"].copy()
            store.v[k] = tensors[f"optim.v.{k}"].copy()
    if "optim.step" in tensors:
        store.step = int(tensors["optim.step"])
    extra = {k: v for k, v in tensors.items() if k.startswith("train.")}
    return Checkpoint(cfg, store, extra)


def load_checkpoint(path) -> Checkpoint:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"checkpoint {p} does not exist")
    return from_bytes(p.read_bytes())
