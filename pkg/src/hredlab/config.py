"""Flat run configuration: presets, file loading, overrides, validation.

Config files are YAML mappings with dotted keys, e.g.::

    preset: desk
    encoder.variant: esn
    data.train: corpus/train.jsonl
    data.val: corpus/val.jsonl

Keys not given fall back to the chosen preset. ``--set key=value`` on the
command line overrides the file.
"""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Any

import yaml

from .encoder import VariantKind
from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


PAPER = {
    "run.seed": 0,
    "data.train": None,
    "data.val": None,
    "data.test": None,
    "encoder.variant": "trained",
    "encoder.hidden": 256,
    "encoder.spectral_radius": None,
    "decoder.hidden": 256,
    "decoder.coverage": True,
    "decoder.coverage_weight": 1.0,
    "model.emb_dim": 128,
    "attention.dim": None,
    "attention.score": "additive",
    "train.batch_size": 8,
    "train.lr": 0.15,
    "train.adagrad_init_acc": 0.1,
    "train.max_grad_norm": 2.0,
    "train.epochs": 12,
    "train.max_doc_tokens": 400,
    "train.max_summary_tokens": 100,
    "train.vocab_size": 50000,
    "train.interval": 100,
    "train.max_updates": None,
    "eval.beam": 4,
    "eval.max_tokens": 120,
    "diagnostics.bins": 101,
}

DESK = dict(PAPER, **{
    "train.vocab_size": 500,
    "encoder.hidden": 32,
    "decoder.hidden": 32,
    "train.epochs": 2,
})

PRESETS = {"paper": PAPER, "desk": DESK}


def _coerce(key: str, value: Any, reference: Any) -> Any:
    if value is None or reference is None:
        return value
    if isinstance(reference, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected true/false, got {value!r}")
    if isinstance(reference, int) and not isinstance(reference, bool):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if isinstance(reference, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    return value


def resolve(overrides: dict[str, Any] | None = None) -> dict[str, Any]:
    """Merge ``overrides`` onto their preset and validate the result."""
    overrides = dict(overrides or {})
    preset = overrides.pop("preset", "paper")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    cfg = copy.deepcopy(PRESETS[preset])
    for key, value in overrides.items():
        if key not in cfg:
            raise ConfigError(f"unknown config key {key!r}")
        ref = cfg[key] if cfg[key] is not None else PAPER.get(key)
        cfg[key] = _coerce(key, value, ref)
    cfg["preset"] = preset
    validate(cfg)
    return cfg


def validate(cfg: dict[str, Any]) -> None:
    try:
        VariantKind.parse(cfg["encoder.variant"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for key in ("encoder.hidden", "decoder.hidden", "model.emb_dim"):
        if not isinstance(cfg[key], int) or cfg[key] < 1:
            raise ConfigError(f"{key} must be a positive integer")
    if cfg["attention.score"] != "additive":
        raise ConfigError("attention.score: only 'additive' is implemented")
    if cfg["eval.beam"] < 1 or cfg["eval.max_tokens"] < 1:
        raise ConfigError("eval.beam and eval.max_tokens must be positive")
    try:
        train_config(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_override(text: str) -> tuple[str, Any]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    try:
        value = yaml.safe_load(raw) if raw else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value for {key}: {exc}") from None
    return key.strip(), value


def load(path: str | Path | None, overrides: list[str] | None = None) -> dict[str, Any]:
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            loaded = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping of dotted keys")
        raw.update({str(k): v for k, v in loaded.items()})
    for item in overrides or []:
        k, v = parse_override(item)
        raw[k] = v
    return resolve(raw)


def model_config(cfg: dict[str, Any], vocab_size: int) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab_size,
        emb_dim=cfg["model.emb_dim"],
        enc_hidden=cfg["encoder.hidden"],
        dec_hidden=cfg["decoder.hidden"],
        attn_dim=cfg["attention.dim"],
        variant=VariantKind.parse(cfg["encoder.variant"]).value,
        seed=cfg["run.seed"],
        coverage=cfg["decoder.coverage"],
        coverage_weight=cfg["decoder.coverage_weight"],
        spectral_radius=cfg["encoder.spectral_radius"],
    )


def train_config(cfg: dict[str, Any]) -> TrainConfig:
    return TrainConfig(
        batch_size=cfg["train.batch_size"],
        lr=cfg["train.lr"],
        adagrad_init_acc=cfg["train.adagrad_init_acc"],
        max_grad_norm=cfg["train.max_grad_norm"],
        epochs=cfg["train.epochs"],
        max_doc_tokens=cfg["train.max_doc_tokens"],
        max_summary_tokens=cfg["train.max_summary_tokens"],
        vocab_size=cfg["train.vocab_size"],
        seed=cfg["run.seed"],
        interval=cfg["train.interval"],
        max_updates=cfg["train.max_updates"],
    )
