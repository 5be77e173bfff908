"""Shared fixtures: tiny models and corpora small enough for exhaustive checks."""

from __future__ import annotations

import numpy as np
import pytest

from hredlab.data import Vocabulary, collate, encode_example
from hredlab.model import ModelConfig, SummarizationModel

TINY_VOCAB = Vocabulary([f"t{i}" for i in range(8)])  # 4 reserved + 8 = 12


def tiny_model(variant: str = "trained", seed: int = 0, d: int = 4, emb: int = 4,
               vocab_size: int = 12, **kw) -> SummarizationModel:
    return SummarizationModel(ModelConfig(vocab_size, emb_dim=emb, enc_hidden=d, dec_hidden=d,
                                          variant=variant, seed=seed, **kw))


def tiny_examples():
    """Two sentences of three tokens, one OOV so the copy path is exercised."""
    return [
        encode_example(["t0 t1 t2", "t3 zz t4"], "t1 zz t5", TINY_VOCAB),
        encode_example(["t5 t6 t7", "t0 t2"], "t6 t0", TINY_VOCAB),
    ]


def tiny_batch():
    return collate(tiny_examples(), len(TINY_VOCAB))


@pytest.fixture
def gen():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.result_lines():
        terminalreporter.write_line(line)
