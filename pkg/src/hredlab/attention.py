"""Word-level, sentence-level, and combined hierarchical attention.

Word scores use additive (concat) scoring with a coverage feature; sentence
scores use additive scoring without coverage. The combined weight of token
``k`` is ``beta_k * gamma_{s(k)}`` renormalised over the document.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from . import tensor as T
from .errors import DegenerateInputError
from .params import ParameterRegistry
from .tensor import Tensor


@dataclass
class AttentionParams:
    # word level: e_k = v . tanh(W_h h_k + W_s s + w_c cov_k + b)
    word_W_h: Tensor
    word_W_s: Tensor
    word_w_c: Tensor
    word_b: Tensor
    word_v: Tensor
    # sentence level: e_m = v . tanh(W_d h_m + W_s s + b)
    sent_W_d: Tensor
    sent_W_s: Tensor
    sent_b: Tensor
    sent_v: Tensor

    @classmethod
    def create(cls, registry: ParameterRegistry, enc_dim: int, dec_dim: int,
               attn_dim: int, seed: int) -> "AttentionParams":
        def u(name, shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return registry.add(f"attention.{name}", rng.uniform(seed, f"attention.{name}", shape, -bound, bound))

        return cls(
            word_W_h=u("word.W_h", (attn_dim, enc_dim), enc_dim),
            word_W_s=u("word.W_s", (attn_dim, dec_dim), dec_dim),
            word_w_c=u("word.w_c", (attn_dim,), 1),
            word_b=registry.add("attention.word.b", np.zeros(attn_dim)),
            word_v=u("word.v", (1, attn_dim), attn_dim),
            sent_W_d=u("sentence.W_d", (attn_dim, enc_dim), enc_dim),
            sent_W_s=u("sentence.W_s", (attn_dim, dec_dim), dec_dim),
            sent_b=registry.add("attention.sentence.b", np.zeros(attn_dim)),
            sent_v=u("sentence.v", (1, attn_dim), attn_dim),
        )


def word_features(params: AttentionParams, word_states: Tensor) -> Tensor:
    """Decoder-independent part of the word score, computed once per document."""
    return T.linear(word_states, params.word_W_h)


def sentence_features(params: AttentionParams, sentence_states: Tensor) -> Tensor:
    return T.linear(sentence_states, params.sent_W_d)


def _batched(x: Tensor, ndim: int) -> tuple[Tensor, bool]:
    x = T.as_tensor(x)
    if x.ndim == ndim - 1:
        return T.reshape(x, (1,) + x.shape), True
    return x, False


def word_attention(
    params: AttentionParams,
    word_states: Tensor | None,
    dec_state: Tensor,
    coverage: Tensor,
    mask: np.ndarray | None = None,
    features: Tensor | None = None,
) -> Tensor:
    """Word-level weights ``beta`` over the N document tokens.

    Shapes are (N, 2d) / (D,) / (N,) for one document, or with a leading
    batch axis. Pass precomputed ``features`` to skip the state projection.
    """
    if features is None:
        features = word_features(params, word_states)
    features, single = _batched(features, 3)
    dec_state, _ = _batched(dec_state, 2)
    coverage, _ = _batched(coverage, 2)
    B, N, A = features.shape
    query = T.reshape(T.linear(dec_state, params.word_W_s, params.word_b), (B, 1, A))
    cov = T.reshape(coverage, (B, N, 1)) * params.word_w_c
    scores = T.reshape(T.linear(T.tanh(features + query + cov), params.word_v), (B, N))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).reshape(B, N)
    beta = T.softmax(scores, mask)
    return T.reshape(beta, (N,)) if single else beta


def sentence_attention(
    params: AttentionParams,
    sentence_states: Tensor | None,
    dec_state: Tensor,
    mask: np.ndarray | None = None,
    features: Tensor | None = None,
) -> Tensor:
    """Sentence-level weights ``gamma`` over the M sentences."""
    if features is None:
        features = sentence_features(params, sentence_states)
    features, single = _batched(features, 3)
    dec_state, _ = _batched(dec_state, 2)
    B, M, A = features.shape
    query = T.reshape(T.linear(dec_state, params.sent_W_s, params.sent_b), (B, 1, A))
    scores = T.reshape(T.linear(T.tanh(features + query), params.sent_v), (B, M))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).reshape(B, M)
    gamma = T.softmax(scores, mask)
    return T.reshape(gamma, (M,)) if single else gamma


def combine_attention(
    beta: Tensor,
    gamma: Tensor,
    sentence_of_token,
    mask: np.ndarray | None = None,
) -> Tensor:
    """``alpha_k = beta_k gamma_{s(k)} / sum_l beta_l gamma_{s(l)}``.

    ``sentence_of_token`` gives s(k) per token (same trailing shape as
    ``beta``). Masked tokens are excluded from numerator and denominator.
    """
    beta, gamma = T.as_tensor(beta), T.as_tensor(gamma)
    num = beta * T.take_last(gamma, sentence_of_token)
    if mask is not None:
        num = T.where(mask, num, 0.0)
    den = T.tsum(num, axis=-1, keepdims=True)
    if np.any(den.data <= 0):
        raise DegenerateInputError("combine_attention: zero normaliser")
    return num / den


def context_vector(alpha: Tensor, word_states: Tensor) -> Tensor:
    """Attention-weighted sum of word states: (.., N) x (.., N, 2d) -> (.., 2d)."""
    alpha, word_states = T.as_tensor(alpha), T.as_tensor(word_states)
    lead = alpha.shape[:-1]
    ctx = T.matmul(T.reshape(alpha, lead + (1, alpha.shape[-1])), word_states)
    return T.reshape(ctx, lead + (word_states.shape[-1],))


def update_coverage(coverage: Tensor, alpha: Tensor) -> Tensor:
    return T.as_tensor(coverage) + alpha
