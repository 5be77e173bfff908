"""Perplexity, beam-search decoding, and ROUGE-1/2/L."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .data import END, START, Batch, Example, collate
from .errors import ContractError


# -- perplexity ----------------------------------------------------------------


def nll_totals(model, batches: Sequence[Batch]) -> tuple[float, int]:
    total, count = 0.0, 0
    with T.no_grad():
        for b in batches:
            parts = model.loss(b)
            total += parts.nll_sum
            count += parts.n_tokens
    return total, count


def perplexity(model, dataset, batch_size: int = 8) -> float:
    """``exp(total NLL / total target tokens)`` under teacher forcing.

    ``dataset`` is a sequence of :class:`Batch` or of :class:`Example`.
    Pooling is token-weighted, so the value does not depend on batching.
    """
    dataset = list(dataset)
    if not dataset:
        raise ContractError("perplexity: empty dataset")
    if isinstance(dataset[0], Example):
        dataset = [collate(dataset[i : i + batch_size], model.vocab_size)
                   for i in range(0, len(dataset), batch_size)]
    total, count = nll_totals(model, dataset)
    if count == 0:
        raise ContractError("perplexity: dataset has no target tokens")
    return math.exp(total / count)


# -- decoding ------------------------------------------------------------------


@dataclass
class BeamHypothesis:
    tokens: list[int]      # generated ids, START excluded, END included if finished
    log_prob: float
    finished: bool = False

    @property
    def score(self) -> float:
        """Length-normalised log-probability."""
        return self.log_prob / max(len(self.tokens), 1)

    @property
    def output(self) -> list[int]:
        return self.tokens[:-1] if self.finished else list(self.tokens)


def _rank_key(h: BeamHypothesis):
    return (-h.score, h.tokens)


def beam_search(model, example: Example, beam: int = 4, max_tokens: int = 120,
                force_pgen: float | None = None) -> BeamHypothesis:
    """Beam search over the extended vocabulary of one document.

    Each live hypothesis is expanded by its ``2 * beam`` best tokens; the
    pooled candidates are ranked by length-normalised log-probability (ties
    go to the lexicographically smaller token sequence) and the top ``beam``
    are kept. Kept candidates ending in END retire; the others stay live, so
    the beam shrinks as hypotheses finish. Search stops when nothing is live
    or after ``max_tokens`` steps.
    """
    if beam < 1:
        raise ContractError("beam size must be >= 1")
    if not example.sentences:
        raise ContractError("beam_search: empty document")
    batch = collate([example], model.vocab_size)
    with T.no_grad():
        src1 = model.encode(batch)
        state = model.initial_state(src1)
        live = [BeamHypothesis([], 0.0)]
        finished: list[BeamHypothesis] = []
        src = src1
        for _ in range(max_tokens):
            if len(src.source_ext) != len(live):
                src = src1.repeat(len(live))
            prev = [h.tokens[-1] if h.tokens else START for h in live]
            out = model.step(prev, state, src, force_pgen)
            logp = np.log(np.maximum(out.final_dist.data, 1e-12))
            k = min(2 * beam, logp.shape[1])
            cands: list[tuple[BeamHypothesis, int]] = []
            for i, h in enumerate(live):
                # stable order on ties: lower token id first
                top = np.argsort(-logp[i], kind="stable")[:k]
                for tok in top:
                    cands.append((BeamHypothesis(h.tokens + [int(tok)], h.log_prob + float(logp[i, tok])), i))
            cands.sort(key=lambda c: _rank_key(c[0]))
            new_live, parents = [], []
            for h, i in cands[: beam - len(finished)]:
                if h.tokens[-1] == END:
                    h.finished = True
                    finished.append(h)
                else:
                    new_live.append(h)
                    parents.append(i)
            if not new_live:
                break
            idx = np.asarray(parents)
            live = new_live
            st = out.state
            state = type(st)(st.h[idx], st.c[idx], st.context[idx], st.coverage[idx])
    pool = finished if finished else live
    return min(pool, key=_rank_key)


def greedy_decode(model, example: Example, max_tokens: int = 120) -> list[int]:
    batch = collate([example], model.vocab_size)
    out_ids: list[int] = []
    with T.no_grad():
        src = model.encode(batch)
        state = model.initial_state(src)
        prev = START
        for _ in range(max_tokens):
            out = model.step([prev], state, src)
            prev = int(np.argmax(out.final_dist.data[0]))
            if prev == END:
                break
            out_ids.append(prev)
            state = out.state
    return out_ids


# -- ROUGE ---------------------------------------------------------------------


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


def _prf(overlap: float, hyp_total: float, ref_total: float) -> PRF:
    p = overlap / hyp_total if hyp_total > 0 else 0.0
    r = overlap / ref_total if ref_total > 0 else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return PRF(p, r, f)


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(reference: Sequence[str], hypothesis: Sequence[str], n: int) -> PRF:
    """Clipped n-gram overlap precision, recall, and F1."""
    if n < 1:
        raise ContractError("rouge_n: n must be >= 1")
    ref, hyp = ngrams(reference, n), ngrams(hypothesis, n)
    overlap = sum((ref & hyp).values())
    return _prf(overlap, sum(hyp.values()), sum(ref.values()))


def lcs_length(a: Sequence, b: Sequence) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(reference: Sequence[str], hypothesis: Sequence[str]) -> PRF:
    return _prf(lcs_length(reference, hypothesis), len(hypothesis), len(reference))


@dataclass(frozen=True)
class RougeScore:
    rouge1: PRF
    rouge2: PRF
    rougeL: PRF


def rouge(reference: Sequence[str] | str, hypothesis: Sequence[str] | str) -> RougeScore:
    """Summary-level ROUGE-1/2/L on lowercased whitespace tokens."""
    ref = _tokens(reference)
    hyp = _tokens(hypothesis)
    return RougeScore(rouge_n(ref, hyp, 1), rouge_n(ref, hyp, 2), rouge_l(ref, hyp))


def _tokens(x) -> list[str]:
    if isinstance(x, str):
        x = x.split()
    return [t.lower() for t in x]


def corpus_rouge(references: Sequence, hypotheses: Sequence) -> dict[str, float]:
    """Example-averaged F1 for ROUGE-1, -2, -L."""
    if len(references) != len(hypotheses):
        raise ContractError("corpus_rouge: reference/hypothesis count mismatch")
    scores = [rouge(r, h) for r, h in zip(references, hypotheses)]
    if not scores:
        return {"rouge1": 0.0, "rouge2": 0.0, "rougeL": 0.0}
    return {
        "rouge1": float(np.mean([s.rouge1.f1 for s in scores])),
        "rouge2": float(np.mean([s.rouge2.f1 for s in scores])),
        "rougeL": float(np.mean([s.rougeL.f1 for s in scores])),
    }


def bootstrap_ci(values: Sequence[float], resamples: int = 1000, seed: int = 0,
                 level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean of example-level scores."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ContractError("bootstrap_ci: no values")
    gen = np.random.default_rng(seed)
    means = values[gen.integers(0, values.size, size=(resamples, values.size))].mean(axis=1)
    lo, hi = np.quantile(means, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)
