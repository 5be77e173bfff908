"""Pointer-generator LSTM decoder with coverage.

At each step the decoder mixes a generation distribution over the base
vocabulary with a copy distribution over source positions, gated by
``p_gen``. Source out-of-vocabulary tokens live at ids ``V, V+1, ...`` of the
per-example extended vocabulary and are reachable only by copying.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import attention as A
from . import rng
from . import tensor as T
from .encoder import DocumentEncoding
from .layers import LstmParams, lstm_cell
from .params import ParameterRegistry
from .tensor import Tensor

LOG_FLOOR = 1e-12


@dataclass
class DecoderParams:
    lstm: LstmParams
    bridge_h_W: Tensor
    bridge_h_b: Tensor
    bridge_c_W: Tensor
    bridge_c_b: Tensor
    pgen_w_c: Tensor
    pgen_w_s: Tensor
    pgen_w_x: Tensor
    pgen_b: Tensor
    out_W: Tensor
    out_b: Tensor
    vocab_bias: Tensor

    @property
    def hidden_dim(self) -> int:
        return self.lstm.hidden_dim

    @classmethod
    def create(cls, registry: ParameterRegistry, vocab_size: int, emb_dim: int, enc_dim: int,
               dec_dim: int, seed: int) -> "DecoderParams":
        def u(name, shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(seed, f"decoder.{name}", shape, -bound, bound)

        def add(name, values):
            return registry.add(f"decoder.{name}", values)

        lstm_in = emb_dim + enc_dim
        b = np.zeros(4 * dec_dim)
        b[dec_dim : 2 * dec_dim] = 1.0
        lstm = LstmParams.register(
            registry, "decoder.lstm",
            u("lstm.W", (4 * dec_dim, lstm_in), dec_dim),
            u("lstm.U", (4 * dec_dim, dec_dim), dec_dim),
            b, trainable=True,
        )
        return cls(
            lstm=lstm,
            bridge_h_W=add("bridge_h.W", u("bridge_h.W", (dec_dim, enc_dim), enc_dim)),
            bridge_h_b=add("bridge_h.b", np.zeros(dec_dim)),
            bridge_c_W=add("bridge_c.W", u("bridge_c.W", (dec_dim, enc_dim), enc_dim)),
            bridge_c_b=add("bridge_c.b", np.zeros(dec_dim)),
            pgen_w_c=add("pgen.w_c", u("pgen.w_c", (1, enc_dim), enc_dim)),
            pgen_w_s=add("pgen.w_s", u("pgen.w_s", (1, dec_dim), dec_dim)),
            pgen_w_x=add("pgen.w_x", u("pgen.w_x", (1, emb_dim), emb_dim)),
            pgen_b=add("pgen.b", np.zeros(1)),
            out_W=add("out.W", u("out.W", (emb_dim, dec_dim + enc_dim), dec_dim + enc_dim)),
            out_b=add("out.b", np.zeros(emb_dim)),
            vocab_bias=add("out.vocab_bias", np.zeros(vocab_size)),
        )


@dataclass
class SourceView:
    """Per-batch encoder output plus the projections attention reuses every step."""

    encoding: DocumentEncoding
    word_features: Tensor
    sentence_features: Tensor
    source_ext: np.ndarray
    ext_size: int

    def repeat(self, n: int) -> "SourceView":
        idx = np.zeros(n, dtype=np.int64)
        return SourceView(self.encoding.repeat(n), self.word_features[idx],
                          self.sentence_features[idx], self.source_ext[idx], self.ext_size)


@dataclass
class DecoderState:
    h: Tensor
    c: Tensor
    context: Tensor
    coverage: Tensor


@dataclass
class DecoderStep:
    state: DecoderState
    p_gen: Tensor
    vocab_dist: Tensor
    final_dist: Tensor
    beta: Tensor
    gamma: Tensor
    alpha: Tensor
    coverage_penalty: Tensor  # sum_k min(alpha_k, coverage_k) with pre-step coverage


def compute_pgen(params: DecoderParams, context: Tensor, dec_state: Tensor, inp: Tensor) -> Tensor:
    """``sigmoid(w_c . c + w_s . s + w_x . x + b)``, shape (.., 1)."""
    z = (T.linear(context, params.pgen_w_c, params.pgen_b)
         + T.linear(dec_state, params.pgen_w_s)
         + T.linear(inp, params.pgen_w_x))
    return T.sigmoid(z)


def final_distribution(p_gen, vocab_dist, alpha, source_ext, ext_size: int) -> Tensor:
    """``P(w) = p_gen P_vocab(w) + (1 - p_gen) sum_{k: src_k = w} alpha_k``.

    ``vocab_dist`` covers the V base ids; slots ``V..ext_size-1`` get
    probability only through copying.
    """
    p_gen, vocab_dist, alpha = T.as_tensor(p_gen), T.as_tensor(vocab_dist), T.as_tensor(alpha)
    gen = p_gen * vocab_dist
    extra = ext_size - vocab_dist.shape[-1]
    if extra > 0:
        gen = T.concat([gen, Tensor(np.zeros(gen.shape[:-1] + (extra,)))], axis=-1)
    copy = T.scatter_add_last((1.0 - p_gen) * alpha, source_ext, ext_size)
    return gen + copy


def target_log_probs(final_dist: Tensor, targets) -> Tensor:
    """log P(target), floored at ``log(1e-12)``; drops the vocab axis."""
    targets = np.asarray(targets, dtype=np.int64)
    picked = T.take_last(final_dist, targets[..., None])
    picked = T.reshape(picked, picked.shape[:-1])
    return T.log(T.clamp_min(picked, LOG_FLOOR))


def nll_loss(final_dists, targets, mask=None) -> Tensor:
    """Mean negative log-likelihood over unmasked target steps.

    ``final_dists`` is (.., T, E) or a list of T per-step (.., E) tensors;
    ``targets`` and ``mask`` are (.., T).
    """
    targets = np.asarray(targets, dtype=np.int64)
    if isinstance(final_dists, (list, tuple)):
        steps = [target_log_probs(d, targets[..., t]) for t, d in enumerate(final_dists)]
        logp = T.stack(steps, axis=-1)
    else:
        logp = target_log_probs(final_dists, targets)
    return masked_mean(-logp, mask)


def masked_mean(values: Tensor, mask=None) -> Tensor:
    if mask is None:
        return T.mean(values)
    mask = np.asarray(mask, dtype=bool)
    n = mask.sum()
    return T.tsum(T.where(mask, values, 0.0)) * (1.0 / max(n, 1))


def coverage_loss(alpha: Tensor, coverage: Tensor) -> Tensor:
    """``sum_k min(alpha_k, coverage_k)`` over the last axis."""
    return T.tsum(T.minimum(alpha, coverage), axis=-1)


def initial_state(params: DecoderParams, src: SourceView) -> DecoderState:
    final = src.encoding.final_state
    B = final.shape[0]
    N = src.encoding.word_states.shape[1]
    return DecoderState(
        h=T.linear(final, params.bridge_h_W, params.bridge_h_b),
        c=T.linear(final, params.bridge_c_W, params.bridge_c_b),
        context=Tensor(np.zeros((B, src.encoding.word_states.shape[-1]))),
        coverage=Tensor(np.zeros((B, N))),
    )


def decoder_step(
    params: DecoderParams,
    attn: A.AttentionParams,
    embedding: Tensor,
    inp: Tensor,
    state: DecoderState,
    src: SourceView,
    force_pgen: float | None = None,
) -> DecoderStep:
    """Advance every sequence in the batch by one target token.

    ``inp`` is the embedded previous token (B, emb). ``force_pgen`` pins the
    generation gate (1.0 disables copying) for ablations.
    """
    enc = src.encoding
    x = T.concat([inp, state.context], axis=-1)
    h, c = lstm_cell(params.lstm, x, state.h, state.c)

    beta = A.word_attention(attn, None, h, state.coverage, enc.token_mask, features=src.word_features)
    gamma = A.sentence_attention(attn, None, h, enc.sentence_mask, features=src.sentence_features)
    alpha = A.combine_attention(beta, gamma, enc.sentence_of_token, enc.token_mask)
    context = A.context_vector(alpha, enc.word_states)

    if force_pgen is None:
        p_gen = compute_pgen(params, context, h, inp)
    else:
        p_gen = Tensor(np.full((h.shape[0], 1), float(force_pgen)))
    hidden = T.linear(T.concat([h, context], axis=-1), params.out_W, params.out_b)
    # output layer tied to the input embedding table
    logits = T.linear(hidden, embedding, params.vocab_bias)
    vocab_dist = T.softmax(logits)
    final = final_distribution(p_gen, vocab_dist, alpha, src.source_ext, src.ext_size)

    penalty = coverage_loss(alpha, state.coverage)
    coverage = A.update_coverage(state.coverage, alpha)
    return DecoderStep(DecoderState(h, c, context, coverage), p_gen, vocab_dist, final,
                       beta, gamma, alpha, penalty)
