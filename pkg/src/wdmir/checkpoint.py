"""Binary checkpoint format.

Layout: the 8-byte magic ``WDMIRCKP``, a little-endian uint64 header
length, a UTF-8 JSON header (sorted keys, compact separators), then every
tensor listed in the header as raw little-endian float64 in header order.
Nothing time- or platform-dependent is written, so save -> load -> save
is byte-identical.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .config import RunConfig
from .errors import DataError
from .model import ModelConfig, ModelParams, init_params
from .numerics.optim import AdamState

MAGIC = b"WDMIRCKP"
FORMAT_VERSION = 1


class CheckpointError(DataError):
    """Unreadable checkpoint or one that does not match the requested config."""


@dataclass
class Checkpoint:
    config: RunConfig
    model: ModelConfig
    params: ModelParams
    adam: AdamState
    epoch: int = 0
    rng: dict[str, Any] = field(default_factory=dict)
    best_val_acc: float = -1.0
    best_epoch: int = -1
    stale_epochs: int = 0


def model_config_to_dict(cfg: ModelConfig) -> dict[str, Any]:
    d = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
    d["drop_slots"] = sorted(cfg.drop_slots)
    return d


def model_config_from_dict(d: dict[str, Any]) -> ModelConfig:
    d = dict(d)
    d["drop_slots"] = frozenset(d.get("drop_slots", ()))
    return ModelConfig(**d)


def _header(ck: Checkpoint) -> tuple[dict[str, Any], list[np.ndarray]]:
    named = ck.params.named()
    tensors, arrays = [], []
    for prefix, source in (("param", {k: v.data for k, v in named.items()}),
                           ("adam.m", ck.adam.m), ("adam.v", ck.adam.v)):
        for name in named:
            if name not in source:
                continue
            arr = np.ascontiguousarray(source[name], dtype="<f8")
            tensors.append({"name": f"{prefix}/{name}", "shape": list(arr.shape)})
            arrays.append(arr)
    header = {
        "format_version": FORMAT_VERSION,
        # the output location is not part of the run's identity
        "config": ck.config.replace(out_dir=None).to_dict(),
        "model": model_config_to_dict(ck.model),
        "params_version": ck.params.version,
        "adam": {"lr": ck.adam.lr, "beta1": ck.adam.beta1, "beta2": ck.adam.beta2,
                 "eps": ck.adam.eps, "step": ck.adam.step},
        "epoch": ck.epoch,
        "rng": ck.rng,
        "best_val_acc": ck.best_val_acc,
        "best_epoch": ck.best_epoch,
        "stale_epochs": ck.stale_epochs,
        "tensors": tensors,
    }
    return header, arrays


def to_bytes(ck: Checkpoint) -> bytes:
    header, arrays = _header(ck)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<Q", len(blob)), blob]
    parts += [a.tobytes() for a in arrays]
    return b"".join(parts)


def save_checkpoint(ck: Checkpoint, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(ck))
    os.replace(tmp, path)
    return path


def from_bytes(raw: bytes, source: str = "<bytes>") -> Checkpoint:
    if raw[:8] != MAGIC or len(raw) < 16:
        raise CheckpointError(f"{source} is not a wdmir checkpoint")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointError(f"{source}: corrupt checkpoint header") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{source}: unsupported format version {header.get('format_version')}")

    config = RunConfig.from_dict(header["config"])
    model = model_config_from_dict(header["model"])
    params = init_params(model, np.random.default_rng(0))
    params.version = header["params_version"]
    named = params.named()
    adam = AdamState(**header["adam"])

    offset = 16 + hlen
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(raw):
            raise CheckpointError(f"{source}: truncated tensor data for {entry['name']}")
        arr = np.frombuffer(raw[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        offset = end
        prefix, name = entry["name"].split("/", 1)
        if name not in named:
            raise CheckpointError(f"{source}: unknown parameter {name!r}")
        if shape != named[name].shape:
            raise CheckpointError(f"{source}: {name} has shape {shape}, model expects {named[name].shape}")
        if prefix == "param":
            named[name].data = arr
        elif prefix == "adam.m":
            adam.m[name] = arr
        elif prefix == "adam.v":
            adam.v[name] = arr
        else:
            raise CheckpointError(f"{source}: unknown tensor section {prefix!r}")
    if offset != len(raw):
        raise CheckpointError(f"{source}: {len(raw) - offset} trailing bytes")

    return Checkpoint(config=config, model=model, params=params, adam=adam,
                      epoch=header["epoch"], rng=header["rng"],
                      best_val_acc=header["best_val_acc"], best_epoch=header["best_epoch"],
                      stale_epochs=header["stale_epochs"])


def load_checkpoint(path: str | os.PathLike, expected: ModelConfig | None = None) -> Checkpoint:
    """Read a checkpoint; if ``expected`` is given the architectures must match."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint {path} not found") from None
    ck = from_bytes(raw, str(path))
    if expected is not None and expected != ck.model:
        diffs = [k for k in ck.model.__dataclass_fields__
                 if getattr(ck.model, k) != getattr(expected, k)]
        raise CheckpointError(f"checkpoint {path} was trained with a different model config "
                              f"(differs in: {', '.join(diffs)})")
    return ck
