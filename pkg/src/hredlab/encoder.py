"""Hierarchical sentence/document encoders and their initialisation variants.

Four variants share one architecture (a bidirectional sentence LSTM feeding a
bidirectional document recurrence) and differ only in how the recurrence
weights are set and whether they are updated:

``trained``   uniform init, forget bias 1, everything trainable
``random``    every weight and bias ~ U(-1/sqrt(d), 1/sqrt(d)), frozen
``identity``  per-gate identity matrices, zero biases, frozen
``esn``       ``random`` sentence LSTM plus an N(0, 1) echo-state reservoir
              as document encoder, frozen
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import rng
from . import tensor as T
from .errors import ContractError, DimensionError
from .layers import LstmParams, bilstm, identity_like
from .params import ParameterRegistry
from .tensor import Tensor


class VariantKind(str, enum.Enum):
    TRAINED = "trained"
    RANDOM = "random"
    IDENTITY = "identity"
    ESN = "esn"

    @classmethod
    def parse(cls, value: "str | VariantKind") -> "VariantKind":
        if isinstance(value, cls):
            return value
        aliases = {"randomuniform": "random", "echostate": "esn"}
        key = str(value).lower().replace("_", "").replace("-", "")
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown encoder variant {value!r}; expected one of "
                             f"{[v.value for v in cls]}") from None


@dataclass(frozen=True)
class EncoderVariant:
    kind: VariantKind
    hidden_dim: int
    seed: int = 0
    # optional rescale of the reservoir recurrence to this spectral radius
    spectral_radius: float | None = None

    @property
    def frozen(self) -> bool:
        return self.kind is not VariantKind.TRAINED


@dataclass
class EsnParams:
    W_in: Tensor
    W_rec: Tensor

    @property
    def hidden_dim(self) -> int:
        return self.W_rec.shape[0]


@dataclass
class EncoderParams:
    variant: EncoderVariant
    sent_fwd: LstmParams
    sent_bwd: LstmParams
    doc_fwd: LstmParams | EsnParams
    doc_bwd: LstmParams | EsnParams

    @property
    def hidden_dim(self) -> int:
        return self.variant.hidden_dim

    @property
    def output_dim(self) -> int:
        return 2 * self.variant.hidden_dim


@dataclass
class DocumentEncoding:
    """Encoder output for a padded batch of B documents.

    ``word_states`` (B, N, 2d) holds sentence-encoder states of every token
    in document order, ``sentence_states`` (B, M, 2d) the document-encoder
    states, and ``sentence_of_token`` (B, N) maps token slots to sentence
    slots. Masks are True on real positions.
    """

    word_states: Tensor
    token_mask: np.ndarray
    sentence_states: Tensor
    sentence_mask: np.ndarray
    sentence_of_token: np.ndarray
    final_state: Tensor
    sentence_encodings: Tensor

    def repeat(self, n: int) -> "DocumentEncoding":
        """Tile a single-document encoding ``n`` times (beam hypotheses)."""
        idx = np.zeros(n, dtype=np.int64)
        return DocumentEncoding(
            self.word_states[idx],
            self.token_mask[idx],
            self.sentence_states[idx],
            self.sentence_mask[idx],
            self.sentence_of_token[idx],
            self.final_state[idx],
            self.sentence_encodings[idx],
        )


# -- initialisation ------------------------------------------------------------


def _lstm_arrays(variant: EncoderVariant, prefix: str, input_dim: int, d: int):
    kind, seed = variant.kind, variant.seed
    if kind is VariantKind.IDENTITY:
        W = np.vstack([identity_like(d, input_dim)] * 4)
        U = np.vstack([np.eye(d)] * 4)
        return W, U, np.zeros(4 * d)
    bound = 1.0 / np.sqrt(d)
    W = rng.uniform(seed, f"{prefix}.W", (4 * d, input_dim), -bound, bound)
    U = rng.uniform(seed, f"{prefix}.U", (4 * d, d), -bound, bound)
    if kind is VariantKind.TRAINED:
        b = np.zeros(4 * d)
        b[d : 2 * d] = 1.0
    else:
        b = rng.uniform(seed, f"{prefix}.b", (4 * d,), -bound, bound)
    return W, U, b


def _esn_arrays(variant: EncoderVariant, prefix: str, input_dim: int, d: int):
    W_in = rng.normal(variant.seed, f"{prefix}.W_in", (d, input_dim))
    W_rec = rng.normal(variant.seed, f"{prefix}.W_rec", (d, d))
    if variant.spectral_radius is not None:
        radius = np.max(np.abs(np.linalg.eigvals(W_rec)))
        W_rec = W_rec * (variant.spectral_radius / radius)
    return W_in, W_rec


def init_encoder(
    variant: EncoderVariant,
    registry: ParameterRegistry,
    input_dim: int,
) -> EncoderParams:
    """Register sentence/document encoder parameters for ``variant``.

    Values are a pure function of ``(variant.seed, parameter name)``.
    """
    d = variant.hidden_dim
    if d < 1:
        raise ContractError(f"encoder hidden size must be >= 1, got {d}")
    trainable = not variant.frozen
    sent_variant = variant
    if variant.kind is VariantKind.ESN:
        sent_variant = EncoderVariant(VariantKind.RANDOM, d, variant.seed)

    sent = []
    for direction in ("fwd", "bwd"):
        prefix = f"sentence_encoder.{direction}"
        W, U, b = _lstm_arrays(sent_variant, prefix, input_dim, d)
        sent.append(LstmParams.register(registry, prefix, W, U, b, trainable))

    doc = []
    for direction in ("fwd", "bwd"):
        prefix = f"document_encoder.{direction}"
        if variant.kind is VariantKind.ESN:
            W_in, W_rec = _esn_arrays(variant, prefix, 2 * d, d)
            doc.append(EsnParams(
                registry.add(f"{prefix}.W_in", W_in, trainable=False),
                registry.add(f"{prefix}.W_rec", W_rec, trainable=False),
            ))
        else:
            W, U, b = _lstm_arrays(variant, prefix, 2 * d, d)
            doc.append(LstmParams.register(registry, prefix, W, U, b, trainable))
    return EncoderParams(variant, sent[0], sent[1], doc[0], doc[1])


# -- reservoir -----------------------------------------------------------------


def _esn_direction(p: EsnParams, us: Tensor, mask, reverse: bool) -> list[Tensor]:
    B, steps, _ = us.shape
    h = Tensor(np.zeros((B, p.hidden_dim)))
    drive = T.linear(us, p.W_in)
    outs: list[Tensor | None] = [None] * steps
    for t in (range(steps - 1, -1, -1) if reverse else range(steps)):
        h_new = T.tanh(drive[:, t] + T.linear(h, p.W_rec))
        if mask is None or mask[:, t].all():
            h = h_new
        else:
            h = T.where(mask[:, t, None], h_new, h)
        outs[t] = h
    return outs


def esn_run(
    p_fwd: EsnParams,
    p_bwd: EsnParams,
    inputs: Tensor,
    mask: np.ndarray | None = None,
) -> tuple[Tensor, Tensor]:
    """Bidirectional echo-state reservoir, ``h_t = tanh(W_in u_t + W_rec h_{t-1})``.

    ``inputs`` is (M, in) or (B, M, in). Returns per-step states (.., M, 2d)
    and the final state (forward at last valid step, backward at step 0).
    """
    inputs = T.as_tensor(inputs)
    unbatched = inputs.ndim == 2
    if unbatched:
        inputs = T.reshape(inputs, (1,) + inputs.shape)
        mask = None if mask is None else np.asarray(mask, bool)[None]
    if inputs.shape[-1] != p_fwd.W_in.shape[1]:
        raise DimensionError(f"esn_run: inputs {inputs.shape} vs W_in {p_fwd.W_in.shape}")
    fwd = _esn_direction(p_fwd, inputs, mask, reverse=False)
    bwd = _esn_direction(p_bwd, inputs, mask, reverse=True)
    states = T.concat([T.stack(fwd, axis=1), T.stack(bwd, axis=1)], axis=-1)
    # padded steps copy state through, so the last forward slot is final
    final = T.concat([fwd[-1], bwd[0]], axis=-1)
    if unbatched:
        states = T.reshape(states, states.shape[1:])
        final = T.reshape(final, final.shape[1:])
    return states, final


# -- encoding ------------------------------------------------------------------


def encode_sentence(params: EncoderParams, xs: Tensor, mask=None) -> tuple[Tensor, Tensor]:
    """Sentence encoder over token embeddings (N, dim) or a padded (S, L, dim) batch.

    Returns per-token states and the sentence encoding ``[h_fwd[N]; h_bwd[1]]``.
    """
    xs = T.as_tensor(xs)
    if xs.shape[-2] < 1:
        raise ContractError("encode_sentence: empty sentence")
    return bilstm(params.sent_fwd, params.sent_bwd, xs, mask)


def encode_document(params: EncoderParams, sentence_encodings: Tensor, mask=None) -> tuple[Tensor, Tensor]:
    """Document encoder over sentence encodings (M, 2d) or (B, M, 2d)."""
    sentence_encodings = T.as_tensor(sentence_encodings)
    if sentence_encodings.shape[-2] < 1:
        raise ContractError("encode_document: document has no sentences")
    if isinstance(params.doc_fwd, EsnParams):
        return esn_run(params.doc_fwd, params.doc_bwd, sentence_encodings, mask)
    return bilstm(params.doc_fwd, params.doc_bwd, sentence_encodings, mask)


def encode_batch(params: EncoderParams, embeddings: Tensor, batch) -> DocumentEncoding:
    """Encode a padded batch (see :class:`hredlab.data.Batch`).

    ``embeddings`` holds the embedded sentence grid (S, L, dim) for all real
    sentences in the batch.
    """
    word_s, sent_enc = encode_sentence(params, embeddings, batch.sent_token_mask)
    S, L, width = word_s.shape
    zero = Tensor(np.zeros((1, width)))

    flat_words = T.concat([T.reshape(word_s, (S * L, width)), zero], axis=0)
    word_states = flat_words[batch.token_index]

    padded_sents = T.concat([sent_enc, zero], axis=0)
    doc_inputs = padded_sents[batch.sentence_index]
    sent_states, final = encode_document(params, doc_inputs, batch.sentence_mask)
    return DocumentEncoding(
        word_states=word_states,
        token_mask=batch.token_mask,
        sentence_states=sent_states,
        sentence_mask=batch.sentence_mask,
        sentence_of_token=batch.sentence_of_token,
        final_state=final,
        sentence_encodings=doc_inputs,
    )
