"""Adagrad training with global-norm clipping and a frozen-parameter fence."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .data import Example, batch_order, collate
from .diagnostics import relative_weight_change
from .evaluation import perplexity
from .model import SummarizationModel
from .params import ParameterRegistry

log = logging.getLogger(__name__)

ENCODER_GROUPS = ("sentence_encoder", "document_encoder")


@dataclass
class TrainConfig:
    batch_size: int = 8
    lr: float = 0.15
    adagrad_init_acc: float = 0.1
    max_grad_norm: float = 2.0
    epochs: int = 12
    max_doc_tokens: int = 400
    max_summary_tokens: int = 100
    vocab_size: int = 50000
    seed: int = 0
    interval: int = 100
    max_updates: int | None = None

    def __post_init__(self):
        for name in ("batch_size", "lr", "adagrad_init_acc", "max_grad_norm", "epochs",
                     "max_doc_tokens", "max_summary_tokens", "vocab_size", "interval"):
            if getattr(self, name) <= 0:
                raise ValueError(f"train.{name} must be positive, got {getattr(self, name)}")

    def to_dict(self) -> dict:
        return asdict(self)


def clip_gradients(registry: ParameterRegistry, max_norm: float = 2.0) -> float:
    """Rescale trainable gradients in place so their global L2 norm is at most ``max_norm``.

    Returns the scale applied (1.0 when already within bounds).
    """
    grads = [t.grad for _, t in registry.trainable() if t.grad is not None]
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads))
    if norm <= max_norm:
        return 1.0
    scale = max_norm / norm
    for g in grads:
        g *= scale
    return scale


class Adagrad:
    """Per-coordinate Adagrad: ``acc += g^2; w -= lr * g / sqrt(acc)``.

    Accumulators exist only for trainable parameters and start at
    ``init_acc``. Frozen parameters are skipped whatever their grad buffer
    holds.
    """

    def __init__(self, registry: ParameterRegistry, lr: float = 0.15, init_acc: float = 0.1):
        self.registry = registry
        self.lr = lr
        self.init_acc = init_acc
        self.acc: dict[str, np.ndarray] = {
            n: np.full(t.shape, init_acc) for n, t in registry.trainable()
        }

    def step(self) -> None:
        for name, t in self.registry.items():
            if not t.requires_grad or t.grad is None:
                continue
            g = t.grad
            acc = self.acc[name]
            acc += g * g
            t.data -= self.lr * g / np.sqrt(acc)


def adagrad_step(optimizer: Adagrad) -> None:
    optimizer.step()


@dataclass
class MetricsRecord:
    update: int
    epoch: int
    train_ppl: float
    val_ppl: float


@dataclass
class TrainState:
    update: int = 0
    epoch: int = 0
    batch_in_epoch: int = 0


@dataclass
class TrainResult:
    metrics: list[MetricsRecord] = field(default_factory=list)
    # group -> [(update, relative change over the preceding interval)]
    weight_change: dict[str, list[tuple[int, float]]] = field(default_factory=dict)
    losses: list[float] = field(default_factory=list)
    initial_val_ppl: float | None = None
    final_val_ppl: float | None = None


class Trainer:
    def __init__(self, model: SummarizationModel, config: TrainConfig, optimizer: Adagrad | None = None,
                 state: TrainState | None = None):
        self.model = model
        self.config = config
        self.optimizer = optimizer or Adagrad(model.registry, config.lr, config.adagrad_init_acc)
        self.state = state or TrainState()
        self.last_clip_scale = 1.0

    def train_batch(self, batch) -> float:
        """Forward, backward, clip, update. Returns the pre-update loss."""
        reg = self.model.registry
        reg.zero_grad()
        parts = self.model.loss(batch)
        T.backward(parts.total)
        self.last_clip_scale = clip_gradients(reg, self.config.max_grad_norm)
        self.optimizer.step()
        self.state.update += 1
        self._last_parts = parts
        return parts.total.item()

    def epoch_order(self, n: int, epoch: int, lengths) -> list[list[int]]:
        return batch_order(n, self.config.batch_size, [self.config.seed, epoch], lengths)

    def train_loop(
        self,
        train: Sequence[Example],
        val: Sequence[Example] | None = None,
        on_interval: Callable[["Trainer", MetricsRecord], None] | None = None,
        result: TrainResult | None = None,
    ) -> TrainResult:
        """Run epochs until ``epochs`` or ``max_updates`` is reached.

        Every ``interval`` updates (and at update 0) the validation
        perplexity is measured, a parameter snapshot is taken for the
        relative-weight-change series, and ``on_interval`` fires (the CLI
        writes checkpoints and snapshot files there).
        """
        cfg, st, V = self.config, self.state, self.model.vocab_size
        result = result or TrainResult()
        lengths = [ex.num_tokens for ex in train]
        val_batches = _eval_batches(val, V, cfg.batch_size) if val else None
        prev_snapshot = {g: self.model.registry.flat(g).copy() for g in self.model.registry.groups()}
        nll_sum, n_tok = 0.0, 0

        def checkpoint_event():
            nonlocal prev_snapshot, nll_sum, n_tok
            train_ppl = math.exp(nll_sum / n_tok) if n_tok else float("nan")
            val_ppl = perplexity(self.model, val_batches) if val_batches else float("nan")
            rec = MetricsRecord(st.update, st.epoch, train_ppl, val_ppl)
            result.metrics.append(rec)
            if st.update == 0:
                result.initial_val_ppl = val_ppl
            else:
                for g in self.model.registry.groups():
                    cur = self.model.registry.flat(g)
                    try:
                        change = relative_weight_change(prev_snapshot[g], cur)
                    except ValueError:
                        change = float("nan")
                    result.weight_change.setdefault(g, []).append((st.update, change))
            prev_snapshot = {g: self.model.registry.flat(g).copy() for g in self.model.registry.groups()}
            nll_sum, n_tok = 0.0, 0
            log.info("update %d epoch %d train_ppl %.4f val_ppl %.4f", st.update, st.epoch,
                     train_ppl, val_ppl)
            if on_interval is not None:
                on_interval(self, rec)

        if st.update == 0:
            checkpoint_event()
        done = False
        while st.epoch < cfg.epochs and not done:
            order = self.epoch_order(len(train), st.epoch, lengths)
            while st.batch_in_epoch < len(order):
                if cfg.max_updates is not None and st.update >= cfg.max_updates:
                    done = True
                    break
                batch = collate([train[i] for i in order[st.batch_in_epoch]], V)
                loss = self.train_batch(batch)
                if not math.isfinite(loss):
                    raise FloatingPointError(f"non-finite loss {loss} at update {st.update}")
                result.losses.append(loss)
                nll_sum += self._last_parts.nll_sum
                n_tok += self._last_parts.n_tokens
                st.batch_in_epoch += 1
                if st.update % cfg.interval == 0:
                    checkpoint_event()
            if not done:
                st.epoch += 1
                st.batch_in_epoch = 0
        if n_tok:
            checkpoint_event()
        result.final_val_ppl = result.metrics[-1].val_ppl if result.metrics else None
        return result


def _eval_batches(examples, vocab_size: int, batch_size: int):
    return [collate(list(examples[i : i + batch_size]), vocab_size)
            for i in range(0, len(examples), batch_size)]


def train_loop(model: SummarizationModel, train: Sequence[Example], val: Sequence[Example] | None,
               config: TrainConfig, on_interval=None) -> tuple[Trainer, TrainResult]:
    trainer = Trainer(model, config)
    return trainer, trainer.train_loop(train, val, on_interval)
