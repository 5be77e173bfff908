"""Versioned binary checkpoint container.

Layout::

    b"HREDCKPT"            8-byte magic
    uint32 LE              format version
    uint64 LE              header length H
    H bytes                UTF-8 JSON header (sorted keys)
    payload                concatenated float64 little-endian arrays

The header lists every tensor as ``{name, kind, shape, trainable, offset}``
(``kind`` is ``param``, ``adagrad_acc``, or ``grad``; offsets are in bytes
into the payload), plus the run config, update counter, data-order state,
and a CRC32 of the payload.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import ModelConfig, SummarizationModel
from .training import Adagrad, TrainState

MAGIC = b"HREDCKPT"
VERSION = 1


@dataclass
class Checkpoint:
    model: SummarizationModel
    optimizer: Adagrad
    state: TrainState
    config: dict
    extra: dict

    @property
    def model_config(self) -> ModelConfig:
        return self.model.config


def checkpoint_bytes(model: SummarizationModel, optimizer: Adagrad | None, state: TrainState,
                     config: dict, extra: dict | None = None, include_grads: bool = False) -> bytes:
    entries, chunks, offset = [], [], 0

    def put(name, kind, arr, trainable):
        nonlocal offset
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "kind": kind, "shape": list(arr.shape),
                        "trainable": trainable, "offset": offset})
        chunks.append(raw)
        offset += len(raw)

    for name, t in model.registry.items():
        put(name, "param", t.data, bool(t.requires_grad))
    if optimizer is not None:
        for name, acc in optimizer.acc.items():
            put(name, "adagrad_acc", acc, True)
    if include_grads:
        for name, t in model.registry.items():
            if t.grad is not None:
                put(name, "grad", t.grad, bool(t.requires_grad))
    payload = b"".join(chunks)
    header = {
        "version": VERSION,
        "config": config,
        "model": model.config.to_dict(),
        "update": state.update,
        "rng": {"epoch": state.epoch, "batch_in_epoch": state.batch_in_epoch},
        "optimizer": None if optimizer is None else {"lr": optimizer.lr, "init_acc": optimizer.init_acc},
        "tensors": entries,
        "extra": extra or {},
        "payload_bytes": len(payload),
        "payload_crc32": zlib.crc32(payload),
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<IQ", VERSION, len(hb)) + hb + payload


def save_checkpoint(path: str | Path, model, optimizer, state: TrainState, config: dict,
                    extra: dict | None = None, include_grads: bool = False) -> None:
    """Write atomically: a partial file never replaces a good one."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(checkpoint_bytes(model, optimizer, state, config, extra, include_grads))
    tmp.replace(path)


def read_header(blob: bytes) -> tuple[dict, bytes]:
    if len(blob) < 20 or blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, hlen = struct.unpack("<IQ", blob[8:20])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    try:
        header = json.loads(blob[20 : 20 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    payload = blob[20 + hlen :]
    if len(payload) != header.get("payload_bytes") or zlib.crc32(payload) != header.get("payload_crc32"):
        raise CheckpointError("checkpoint payload truncated or corrupt (checksum mismatch)")
    return header, payload


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    header, payload = read_header(blob)
    try:
        model = SummarizationModel(ModelConfig(**header["model"]))
        opt_meta = header.get("optimizer") or {}
        optimizer = Adagrad(model.registry, opt_meta.get("lr", 0.15), opt_meta.get("init_acc", 0.1))
        for e in header["tensors"]:
            shape = tuple(e["shape"])
            n = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(payload, dtype="<f8", count=n, offset=e["offset"]).reshape(shape)
            if e["kind"] == "param":
                t = model.registry[e["name"]]
                if t.shape != shape:
                    raise CheckpointError(f"{e['name']}: shape {shape} does not match model {t.shape}")
                t.data[...] = arr
                model.registry.set_trainable(e["name"], bool(e["trainable"]))
            elif e["kind"] == "adagrad_acc":
                optimizer.acc[e["name"]] = arr.astype(np.float64).copy()
            elif e["kind"] == "grad":
                continue
            else:
                raise CheckpointError(f"unknown tensor kind {e['kind']!r}")
        rng = header.get("rng", {})
        state = TrainState(int(header["update"]), int(rng.get("epoch", 0)),
                           int(rng.get("batch_in_epoch", 0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint does not match this model: {exc}") from exc
    return Checkpoint(model, optimizer, state, header.get("config", {}), header.get("extra", {}))


def read_tensors(path: str | Path) -> tuple[dict, dict[tuple[str, str], np.ndarray]]:
    """Header plus every stored array keyed by ``(kind, name)``, without building a model."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    header, payload = read_header(blob)
    out = {}
    for e in header["tensors"]:
        shape = tuple(e["shape"])
        n = int(np.prod(shape)) if shape else 1
        out[(e["kind"], e["name"])] = np.frombuffer(payload, dtype="<f8", count=n,
                                                    offset=e["offset"]).reshape(shape)
    return header, out

