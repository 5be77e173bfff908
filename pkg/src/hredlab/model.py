"""Hierarchical encoder / pointer-generator decoder summarisation model."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import attention as A
from . import decoder as D
from . import rng
from . import tensor as T
from .data import Batch
from .encoder import EncoderVariant, VariantKind, encode_batch, init_encoder
from .layers import EmbeddingTable, embed
from .params import ParameterRegistry
from .tensor import Tensor


@dataclass
class ModelConfig:
    vocab_size: int
    emb_dim: int = 128
    enc_hidden: int = 256
    dec_hidden: int = 256
    attn_dim: int | None = None
    variant: str = "trained"
    seed: int = 0
    coverage: bool = True
    coverage_weight: float = 1.0
    spectral_radius: float | None = None

    @property
    def attention_dim(self) -> int:
        return self.attn_dim or self.dec_hidden

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossParts:
    total: Tensor
    nll: Tensor
    coverage: Tensor
    nll_sum: float
    n_tokens: int


class SummarizationModel:
    """Parameters plus forward passes. Encoder recurrences freeze per variant;
    embeddings, attention, and decoder always train."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.registry = ParameterRegistry()
        c = config
        bound = 1.0 / np.sqrt(c.emb_dim)
        self.embedding = EmbeddingTable(self.registry.add(
            "embedding.weight",
            rng.uniform(c.seed, "embedding.weight", (c.vocab_size, c.emb_dim), -bound, bound),
        ))
        self.variant = EncoderVariant(VariantKind.parse(c.variant), c.enc_hidden, c.seed,
                                      c.spectral_radius)
        self.encoder = init_encoder(self.variant, self.registry, c.emb_dim)
        enc_dim = 2 * c.enc_hidden
        self.attention = A.AttentionParams.create(self.registry, enc_dim, c.dec_hidden,
                                                  c.attention_dim, c.seed)
        self.decoder = D.DecoderParams.create(self.registry, c.vocab_size, c.emb_dim, enc_dim,
                                              c.dec_hidden, c.seed)

    @property
    def vocab_size(self) -> int:
        return self.config.vocab_size

    # -- forward pieces ----------------------------------------------------
    def encode(self, batch: Batch) -> D.SourceView:
        xs = embed(self.embedding, batch.sent_ids)
        enc = encode_batch(self.encoder, xs, batch)
        return D.SourceView(
            encoding=enc,
            word_features=A.word_features(self.attention, enc.word_states),
            sentence_features=A.sentence_features(self.attention, enc.sentence_states),
            source_ext=batch.source_ext,
            ext_size=self.vocab_size + batch.max_oovs,
        )

    def initial_state(self, src: D.SourceView) -> D.DecoderState:
        return D.initial_state(self.decoder, src)

    def step(self, prev_ids, state: D.DecoderState, src: D.SourceView,
             force_pgen: float | None = None) -> D.DecoderStep:
        prev_ids = np.asarray(prev_ids, dtype=np.int64)
        prev_ids = np.where(prev_ids >= self.vocab_size, 1, prev_ids)
        inp = embed(self.embedding, prev_ids)
        return D.decoder_step(self.decoder, self.attention, self.embedding.weights, inp, state,
                              src, force_pgen)

    # -- teacher-forced loss -----------------------------------------------
    def loss(self, batch: Batch, force_pgen: float | None = None) -> LossParts:
        """NLL (+ weighted coverage penalty) averaged over valid target tokens."""
        src = self.encode(batch)
        state = self.initial_state(src)
        logps, penalties = [], []
        for t in range(batch.dec_input.shape[1]):
            out = self.step(batch.dec_input[:, t], state, src, force_pgen)
            logps.append(D.target_log_probs(out.final_dist, batch.dec_target[:, t]))
            penalties.append(out.coverage_penalty)
            state = out.state
        mask = batch.dec_mask
        logp = T.stack(logps, axis=1)
        nll = D.masked_mean(-logp, mask)
        n = int(mask.sum())
        nll_sum = float(-(logp.data * mask).sum())
        if self.config.coverage:
            cov = D.masked_mean(T.stack(penalties, axis=1), mask)
            total = nll + cov * self.config.coverage_weight
        else:
            cov = Tensor(np.zeros(()))
            total = nll
        return LossParts(total, nll, cov, nll_sum, n)
