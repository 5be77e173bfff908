"""Embedding, LSTM cell, and mask-aware (bi)directional LSTM runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .params import ParameterRegistry
from .tensor import Tensor


@dataclass
class EmbeddingTable:
    weights: Tensor

    @property
    def vocab_size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def embed(table: EmbeddingTable, ids) -> Tensor:
    """Row-stack the embedding vectors of ``ids`` (any integer array shape)."""
    return T.embedding_lookup(table.weights, ids)


@dataclass
class LstmParams:
    """Gate parameters stacked in (input, forget, cell, output) order.

    ``W`` is (4d, input_dim), ``U`` is (4d, d), ``b`` is (4d,).
    """

    W: Tensor
    U: Tensor
    b: Tensor

    @property
    def hidden_dim(self) -> int:
        return self.U.shape[1]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def tensors(self) -> tuple[Tensor, Tensor, Tensor]:
        return self.W, self.U, self.b

    @classmethod
    def register(
        cls,
        registry: ParameterRegistry,
        prefix: str,
        W: np.ndarray,
        U: np.ndarray,
        b: np.ndarray,
        trainable: bool,
    ) -> "LstmParams":
        d = U.shape[1]
        if U.shape != (4 * d, d) or W.shape[0] != 4 * d or b.shape != (4 * d,):
            raise DimensionError(f"inconsistent LSTM shapes W{W.shape} U{U.shape} b{b.shape}")
        return cls(
            registry.add(f"{prefix}.W", W, trainable),
            registry.add(f"{prefix}.U", U, trainable),
            registry.add(f"{prefix}.b", b, trainable),
        )


def _gates(z: Tensor, c: Tensor, d: int) -> tuple[Tensor, Tensor]:
    zi, zf, zg, zo = T.split(z, [d, d, d, d], axis=-1)
    i, f, o = T.sigmoid(zi), T.sigmoid(zf), T.sigmoid(zo)
    g = T.tanh(zg)
    c_new = f * c + i * g
    h_new = o * T.tanh(c_new)
    return h_new, c_new


def lstm_cell(p: LstmParams, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step; ``x``, ``h``, ``c`` may carry a leading batch axis."""
    d = p.hidden_dim
    x, h, c = T.as_tensor(x), T.as_tensor(h), T.as_tensor(c)
    if x.shape[-1] != p.input_dim or h.shape[-1] != d or c.shape[-1] != d:
        raise DimensionError(
            f"lstm_cell: x{x.shape} h{h.shape} c{c.shape} vs input_dim={p.input_dim}, hidden={d}"
        )
    z = T.linear(x, p.W, p.b) + T.linear(h, p.U)
    return _gates(z, c, d)


def run_lstm(
    p: LstmParams,
    xs: Tensor,
    mask: np.ndarray | None = None,
    reverse: bool = False,
    h0: Tensor | None = None,
    c0: Tensor | None = None,
) -> tuple[list[Tensor], Tensor, Tensor]:
    """Run one direction over ``xs`` of shape (B, T, in).

    Steps where ``mask`` is False copy the previous state through, so a
    right-padded sequence run backwards starts from the zero state at its
    last real token. Returns per-step hidden states (in time order) and the
    final (h, c).
    """
    B, steps, _ = xs.shape
    d = p.hidden_dim
    h = h0 if h0 is not None else Tensor(np.zeros((B, d)))
    c = c0 if c0 is not None else Tensor(np.zeros((B, d)))
    # input projections for all steps at once
    xproj = T.linear(xs, p.W, p.b)
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    outs: list[Tensor | None] = [None] * steps
    for t in order:
        z = xproj[:, t] + T.linear(h, p.U)
        h_new, c_new = _gates(z, c, d)
        if mask is None or mask[:, t].all():
            h, c = h_new, c_new
        else:
            m = mask[:, t, None]
            h = T.where(m, h_new, h)
            c = T.where(m, c_new, c)
        outs[t] = h
    return outs, h, c


def bilstm(
    p_fwd: LstmParams,
    p_bwd: LstmParams,
    xs: Tensor,
    mask: np.ndarray | None = None,
) -> tuple[Tensor, Tensor]:
    """Bidirectional LSTM.

    ``xs`` is (T, in) or (B, T, in). Returns states (.., T, 2d) with
    ``states[t] = [h_fwd[t]; h_bwd[t]]`` and final (.., 2d) built from the
    forward state at the last valid step and the backward state at step 0.
    """
    xs = T.as_tensor(xs)
    unbatched = xs.ndim == 2
    if unbatched:
        xs = T.reshape(xs, (1,) + xs.shape)
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)[None]
    if xs.shape[1] < 1:
        raise ContractError("bilstm: empty sequence")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=1).all():
            raise ContractError("bilstm: a sequence has no valid step")
    fwd, hf, _ = run_lstm(p_fwd, xs, mask)
    bwd, hb, _ = run_lstm(p_bwd, xs, mask, reverse=True)
    states = T.concat([T.stack(fwd, axis=1), T.stack(bwd, axis=1)], axis=-1)
    final = T.concat([hf, hb], axis=-1)
    if unbatched:
        states = T.reshape(states, states.shape[1:])
        final = T.reshape(final, final.shape[1:])
    return states, final


def identity_like(rows: int, cols: int) -> np.ndarray:
    """Ones on the main diagonal, zeros elsewhere (``I`` when square)."""
    return np.eye(rows, cols)
