"""Corpus I/O, vocabulary, extended-vocabulary encoding, batching, synthetic tasks.

Corpus files are UTF-8 JSON lines, one record per line::

    {"article": ["first sentence tokens", "second ..."], "abstract": "summary tokens"}

Articles arrive sentence-split and whitespace-tokenised; nothing here runs a
sentence segmenter.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ContractError

PAD, UNK, START, END = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<s>", "</s>")


# -- records -------------------------------------------------------------------


@dataclass
class Record:
    article: list[str]
    abstract: str

    def to_json(self) -> str:
        return json.dumps({"article": self.article, "abstract": self.abstract}, ensure_ascii=False)


def read_corpus(path: str | Path) -> list[Record]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                records.append(Record(list(obj["article"]), str(obj["abstract"])))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed record ({exc})") from exc
    return records


def write_corpus(path: str | Path, records: Iterable[Record]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


# -- vocabulary ----------------------------------------------------------------


class Vocabulary:
    """Token/id map with PAD=0, UNK=1, START=2, END=3 reserved."""

    def __init__(self, tokens: Sequence[str], counts: Sequence[int] | None = None):
        self.itos: list[str] = list(RESERVED) + list(tokens)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ContractError("vocabulary tokens must be distinct and not reserved")
        self.counts = list(counts) if counts is not None else [0] * len(tokens)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def token(self, idx: int) -> str:
        return self.itos[idx]

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for tok, n in zip(self.itos[len(RESERVED):], self.counts):
                fh.write(f"{tok}\t{n}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        toks, counts = [], []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                tok, _, n = line.partition("\t")
                toks.append(tok)
                counts.append(int(n) if n else 0)
        return cls(toks, counts)


def corpus_tokens(records: Iterable[Record]) -> Iterator[str]:
    for r in records:
        for sent in r.article:
            yield from sent.split()
        yield from r.abstract.split()


def build_vocab(records: Sequence[Record], cap: int = 50000) -> Vocabulary:
    """Keep the ``cap - 4`` most frequent tokens, ties broken lexicographically."""
    if not records:
        raise ContractError("build_vocab: empty corpus")
    if cap < len(RESERVED):
        raise ContractError(f"vocabulary cap must be >= {len(RESERVED)}")
    counts = Counter(t for t in corpus_tokens(records) if t not in RESERVED)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[: cap - len(RESERVED)]
    return Vocabulary([t for t, _ in ranked], [n for _, n in ranked])


# -- examples ------------------------------------------------------------------


@dataclass
class Example:
    """One encoded document/summary pair.

    ``sentences`` are encoder ids (OOV -> UNK); ``source_ext`` mirrors them
    in the extended vocabulary, where the i-th distinct source OOV gets id
    ``V + i``. ``target`` is START + summary ids (extended) + END.
    """

    sentences: list[list[int]]
    source_ext: list[list[int]]
    oovs: list[str]
    target: list[int]
    source_tokens: list[list[str]] = field(default_factory=list)
    summary_tokens: list[str] = field(default_factory=list)

    @property
    def num_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


def truncate_sentences(sentences: list[list[str]], max_tokens: int) -> list[list[str]]:
    """Keep whole sentences while they fit; cut the one that crosses the limit."""
    out, used = [], 0
    for sent in sentences:
        if used >= max_tokens:
            break
        room = max_tokens - used
        out.append(sent[:room])
        used += len(out[-1])
    return out


def encode_example(
    article: Sequence[str],
    abstract: str,
    vocab: Vocabulary,
    max_doc_tokens: int = 400,
    max_summary_tokens: int = 100,
) -> Example:
    sentences = [s.split() for s in article]
    sentences = [s for s in sentences if s]
    if not sentences:
        raise ContractError("encode_example: article has no tokens")
    sentences = truncate_sentences(sentences, max_doc_tokens)
    V = len(vocab)
    oovs: list[str] = []
    enc, ext = [], []
    for sent in sentences:
        e_row, x_row = [], []
        for tok in sent:
            i = vocab.id(tok)
            e_row.append(i)
            if i == UNK:
                if tok not in oovs:
                    oovs.append(tok)
                x_row.append(V + oovs.index(tok))
            else:
                x_row.append(i)
        enc.append(e_row)
        ext.append(x_row)
    summary = abstract.split()[:max_summary_tokens]
    target = [START]
    for tok in summary:
        i = vocab.id(tok)
        if i == UNK and tok in oovs:
            i = V + oovs.index(tok)
        target.append(i)
    target.append(END)
    return Example(enc, ext, oovs, target, sentences, summary)


def decode_ids(ids: Iterable[int], vocab: Vocabulary, oovs: Sequence[str]) -> list[str]:
    """Map (extended) ids back to tokens, restoring copied OOVs."""
    V = len(vocab)
    out = []
    for i in ids:
        i = int(i)
        out.append(vocab.token(i) if i < V else oovs[i - V])
    return out


def encode_corpus(records: Sequence[Record], vocab: Vocabulary, max_doc_tokens=400,
                  max_summary_tokens=100) -> list[Example]:
    return [encode_example(r.article, r.abstract, vocab, max_doc_tokens, max_summary_tokens)
            for r in records]


# -- batching ------------------------------------------------------------------


@dataclass
class Batch:
    """Padded tensors for B examples.

    Sentences of all documents are stacked into one (S, L) grid for the
    sentence encoder. ``sentence_index`` (B, M) and ``token_index`` (B, N)
    gather sentence encodings and token states back into per-document order;
    padding slots point one past the end (a zero row).
    """

    examples: list[Example]
    sent_ids: np.ndarray          # (S, L) encoder ids
    sent_token_mask: np.ndarray   # (S, L)
    sentence_index: np.ndarray    # (B, M) into [0, S]
    sentence_mask: np.ndarray     # (B, M)
    token_index: np.ndarray       # (B, N) into [0, S*L]
    token_mask: np.ndarray        # (B, N)
    sentence_of_token: np.ndarray # (B, N) into [0, M)
    source_ext: np.ndarray        # (B, N) extended ids
    dec_input: np.ndarray         # (B, T) base-vocab ids, OOV -> UNK
    dec_target: np.ndarray        # (B, T) extended ids
    dec_mask: np.ndarray          # (B, T)
    max_oovs: int
    vocab_size: int

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def num_target_tokens(self) -> int:
        return int(self.dec_mask.sum())


def collate(examples: Sequence[Example], vocab_size: int) -> Batch:
    B = len(examples)
    all_sents = [s for ex in examples for s in ex.sentences]
    S = len(all_sents)
    L = max(len(s) for s in all_sents)
    M = max(len(ex.sentences) for ex in examples)
    N = max(ex.num_tokens for ex in examples)
    T_ = max(len(ex.target) - 1 for ex in examples)

    sent_ids = np.full((S, L), PAD, dtype=np.int64)
    sent_mask = np.zeros((S, L), dtype=bool)
    sentence_index = np.full((B, M), S, dtype=np.int64)
    sentence_mask = np.zeros((B, M), dtype=bool)
    token_index = np.full((B, N), S * L, dtype=np.int64)
    token_mask = np.zeros((B, N), dtype=bool)
    sentence_of_token = np.zeros((B, N), dtype=np.int64)
    source_ext = np.full((B, N), PAD, dtype=np.int64)
    dec_input = np.full((B, T_), PAD, dtype=np.int64)
    dec_target = np.full((B, T_), PAD, dtype=np.int64)
    dec_mask = np.zeros((B, T_), dtype=bool)

    row = 0
    for b, ex in enumerate(examples):
        k = 0
        for m, (sent, ext) in enumerate(zip(ex.sentences, ex.source_ext)):
            n = len(sent)
            sent_ids[row, :n] = sent
            sent_mask[row, :n] = True
            sentence_index[b, m] = row
            sentence_mask[b, m] = True
            token_index[b, k : k + n] = row * L + np.arange(n)
            token_mask[b, k : k + n] = True
            sentence_of_token[b, k : k + n] = m
            source_ext[b, k : k + n] = ext
            k += n
            row += 1
        tgt = np.asarray(ex.target)
        t = len(tgt) - 1
        inp = tgt[:-1].copy()
        inp[inp >= vocab_size] = UNK
        dec_input[b, :t] = inp
        dec_target[b, :t] = tgt[1:]
        dec_mask[b, :t] = True
    return Batch(
        list(examples), sent_ids, sent_mask, sentence_index, sentence_mask,
        token_index, token_mask, sentence_of_token, source_ext,
        dec_input, dec_target, dec_mask,
        max(len(ex.oovs) for ex in examples), vocab_size,
    )


def batch_order(n: int, batch_size: int, seed: int | Sequence[int] | None, lengths: Sequence[int] | None = None,
                window_batches: int = 16) -> list[list[int]]:
    """Index lists for each batch.

    With a seed: shuffle, then sort by length inside windows of
    ``window_batches * batch_size`` examples to bound padding. Without a
    seed: corpus order.
    """
    idx = np.arange(n)
    if seed is not None:
        idx = np.random.default_rng(seed).permutation(n)
        if lengths is not None:
            w = window_batches * batch_size
            lengths = np.asarray(lengths)
            idx = np.concatenate([
                chunk[np.argsort(lengths[chunk], kind="stable")]
                for chunk in (idx[i : i + w] for i in range(0, n, w))
            ]) if n else idx
    return [idx[i : i + batch_size].tolist() for i in range(0, n, batch_size)]


def make_batches(examples: Sequence[Example], vocab_size: int, batch_size: int = 8,
                 seed: int | None = None) -> list[Batch]:
    order = batch_order(len(examples), batch_size, seed, [ex.num_tokens for ex in examples])
    return [collate([examples[i] for i in chunk], vocab_size) for chunk in order]


# -- synthetic corpora ---------------------------------------------------------

SYNTH_TASKS = ("lead1", "keyword-copy")


def _word(i: int) -> str:
    return f"w{i:05d}"


def synth_corpus(
    task: str,
    n_examples: int,
    vocab_size: int,
    seed: int,
    sentences: tuple[int, int] = (3, 6),
    sentence_len: tuple[int, int] = (4, 8),
    markers: tuple[int, int] = (2, 4),
    marker_offset: int = 0,
) -> list[Record]:
    """Desk-scale stand-ins for a news summarisation corpus.

    ``lead1``: the summary is the first sentence.
    ``keyword-copy``: marker tokens unique to each document (never in the
    vocabulary of ``vocab_size - 4`` base words) are scattered through
    the article; the summary lists them in order.
    """
    if task not in SYNTH_TASKS:
        raise ContractError(f"unknown synthetic task {task!r}; expected one of {SYNTH_TASKS}")
    n_words = vocab_size - len(RESERVED)
    if n_words < 1:
        raise ContractError("vocab_size leaves no room for base words")
    gen = np.random.default_rng(np.random.SeedSequence([seed, SYNTH_TASKS.index(task)]))
    records = []
    for e in range(n_examples):
        n_sent = int(gen.integers(sentences[0], sentences[1] + 1))
        sents = [
            [_word(int(w)) for w in gen.integers(0, n_words, int(gen.integers(sentence_len[0], sentence_len[1] + 1)))]
            for _ in range(n_sent)
        ]
        if task == "lead1":
            abstract = " ".join(sents[0])
        else:
            k = int(gen.integers(markers[0], markers[1] + 1))
            for _ in range(k):
                m = int(gen.integers(0, n_sent))
                sents[m].insert(int(gen.integers(0, len(sents[m]) + 1)), None)
            # name markers in reading order so the summary is their sequence
            names = [f"zmk{marker_offset + e:06d}x{j}" for j in range(k)]
            it = iter(names)
            sents = [[next(it) if t is None else t for t in s] for s in sents]
            abstract = " ".join(names)
        records.append(Record([" ".join(s) for s in sents], abstract))
    return records


def write_synth_corpus(out_dir: str | Path, task: str, n_train: int, n_val: int, n_test: int,
                       vocab_size: int, seed: int, **kwargs) -> dict[str, Path]:
    """Write ``train/val/test.jsonl`` with disjoint seeds per split."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    offset = 0
    for split, n, salt in (("train", n_train, 0), ("val", n_val, 1), ("test", n_test, 2)):
        recs = synth_corpus(task, n, vocab_size, seed * 1000 + salt, marker_offset=offset, **kwargs)
        offset += n
        paths[split] = out_dir / f"{split}.jsonl"
        write_corpus(paths[split], recs)
    return paths
