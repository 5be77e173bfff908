"""Command-line workflows, exit codes, and configuration handling."""

import csv
import json

import numpy as np
import pytest

from hredlab import cli
from hredlab import config as C
from hredlab.checkpoint import load_checkpoint, save_checkpoint
from hredlab.data import Record, collate, encode_example, read_corpus, write_corpus
from hredlab.evaluation import beam_search, greedy_decode, perplexity
from hredlab.training import TrainConfig, Trainer, TrainState

from conftest import TINY_VOCAB, tiny_model

SMALL = ["--set", "encoder.hidden=4", "--set", "decoder.hidden=4", "--set", "model.emb_dim=8",
         "--set", "train.vocab_size=100", "--set", "train.interval=5", "--set", "train.epochs=2"]


def read_csv(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    meta = json.loads(lines[0][2:]) if lines and lines[0].startswith("# ") else None
    rows = list(csv.DictReader(lines[1:] if meta is not None else lines))
    return meta, rows


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert cli.main(["synth-data", "--out", str(out), "--n-train", "40", "--n-val", "8",
                     "--n-test", "4", "--vocab-size", "100"]) == 0
    return out


def train(tmp_path, corpus, *extra, name="run", variant="trained"):
    run = tmp_path / name
    code = cli.main(["train", "--out", str(run), "--set", "preset=desk",
                     "--set", f"data.train={corpus / 'train.jsonl'}",
                     "--set", f"data.val={corpus / 'val.jsonl'}",
                     "--set", f"encoder.variant={variant}", *SMALL, *extra])
    return code, run


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory, corpus):
    code, run = train(tmp_path_factory.mktemp("t"), corpus)
    assert code == 0
    return run


class TestConfig:
    def test_paper_defaults(self):
        cfg = C.resolve({})
        assert cfg["train.batch_size"] == 8 and cfg["train.lr"] == 0.15
        assert cfg["eval.beam"] == 4 and cfg["eval.max_tokens"] == 120
        assert cfg["model.emb_dim"] == 128 and cfg["train.vocab_size"] == 50000

    def test_desk_preset(self):
        cfg = C.resolve({"preset": "desk"})
        assert (cfg["train.vocab_size"], cfg["encoder.hidden"], cfg["decoder.hidden"], cfg["train.epochs"]) == (500, 32, 32, 2)

    def test_file_then_overrides(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("preset: desk\nencoder.variant: esn\ntrain.lr: 0.3\n")
        cfg = C.load(p, ["train.lr=0.5", "encoder.hidden=64"])
        assert cfg["encoder.variant"] == "esn" and cfg["train.lr"] == 0.5 and cfg["encoder.hidden"] == 64

    @pytest.mark.parametrize("overrides", [
        {"nope.key": 1}, {"train.lr": "fast"}, {"encoder.variant": "gru"},
        {"train.batch_size": 0}, {"preset": "huge"}, {"encoder.hidden": 2.5},
        {"decoder.coverage": "maybe"},
    ])
    def test_invalid(self, overrides):
        with pytest.raises(C.ConfigError):
            C.resolve(overrides)

    def test_int_promoted_to_float(self):
        assert C.resolve({"train.lr": 1})["train.lr"] == 1.0

    def test_malformed_override(self):
        with pytest.raises(C.ConfigError):
            C.parse_override("train.lr")

    def test_non_mapping_file(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("- a\n- b\n")
        with pytest.raises(C.ConfigError):
            C.load(p)


class TestTrain:
    def test_outputs(self, trained_run):
        for f in ("metrics.csv", "weight_change.csv", "final.ckpt", "vocab.tsv", "config.json"):
            assert (trained_run / f).is_file(), f
        meta, rows = read_csv(trained_run / "metrics.csv")
        assert meta["config"]["run.seed"] == 0 and meta["config"]["encoder.hidden"] == 4
        assert list(rows[0]) == ["update", "train_ppl", "val_ppl"]
        assert [int(r["update"]) for r in rows] == [0, 5, 10]
        snaps = sorted(p.name for p in (trained_run / "checkpoints").iterdir())
        assert snaps == ["update_000000.ckpt", "update_000005.ckpt", "update_000010.ckpt"]
        ck = load_checkpoint(trained_run / "final.ckpt")
        assert ck.config == meta["config"] and ck.state.update == 10

    def test_same_seed_same_metrics(self, tmp_path, corpus, trained_run):
        code, run = train(tmp_path, corpus)
        assert code == 0
        assert (run / "metrics.csv").read_bytes() == (trained_run / "metrics.csv").read_bytes()

    def test_missing_corpus(self, tmp_path, corpus):
        code, run = train(tmp_path, corpus, "--set", f"data.train={tmp_path / 'missing.jsonl'}")
        assert code == 3
        assert not run.exists()

    def test_malformed_corpus(self, tmp_path, corpus):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{oops\n")
        code, run = train(tmp_path, corpus, "--set", f"data.train={bad}")
        assert code == 3 and not run.exists()

    @pytest.mark.parametrize("override", ["encoder.variant=gru", "bogus=1", "train.lr=-1"])
    def test_bad_config(self, tmp_path, corpus, override):
        code, _ = train(tmp_path, corpus, "--set", override)
        assert code == 2

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["train", str(tmp_path / "none.yaml")]) == 2

    def test_resume_continues(self, tmp_path, corpus, trained_run):
        code, run = train(tmp_path, corpus, "--resume", str(trained_run / "checkpoints" / "update_000005.ckpt"))
        assert code == 0
        a = load_checkpoint(run / "final.ckpt")
        b = load_checkpoint(trained_run / "final.ckpt")
        assert a.state == b.state
        for name, t in a.model.registry.items():
            assert t.data.tobytes() == b.model.registry[name].data.tobytes()


class TestEvaluate:
    def test_perplexity_matches_library(self, tmp_path, corpus, trained_run):
        out = tmp_path / "eval.csv"
        assert cli.main(["evaluate", str(trained_run / "final.ckpt"), "--corpus",
                         str(corpus / "test.jsonl"), "--out", str(out)]) == 0
        meta, rows = read_csv(out)
        ck = load_checkpoint(trained_run / "final.ckpt")
        from hredlab.data import Vocabulary, encode_corpus
        exs = encode_corpus(read_corpus(corpus / "test.jsonl"), Vocabulary(ck.extra["vocab"]))
        assert float(rows[0]["perplexity"]) == perplexity(ck.model, exs)
        assert meta["beam"] == 4 and meta["config"]["run.seed"] == 0
        assert set(rows[0]) >= {"rouge1_f1", "rouge2_f1", "rougeL_f1"}

    def test_memorised_checkpoint_scores_one(self, tmp_path):
        rec = Record(["t0 t1 t2", "t3 t4 t5"], "t0 t1 t2")
        ex = encode_example(rec.article, rec.abstract, TINY_VOCAB)
        model = tiny_model(d=8, emb=8, coverage=False)
        tr = Trainer(model, TrainConfig(vocab_size=12))
        batch = collate([ex], 12)
        for _ in range(1000):
            tr.train_batch(batch)
        save_checkpoint(tmp_path / "m.ckpt", model, tr.optimizer, tr.state, {}, {"vocab": TINY_VOCAB.itos[4:]})
        write_corpus(tmp_path / "one.jsonl", [rec])
        out = tmp_path / "e.csv"
        assert cli.main(["evaluate", str(tmp_path / "m.ckpt"), "--corpus", str(tmp_path / "one.jsonl"),
                         "--out", str(out)]) == 0
        _, rows = read_csv(out)
        assert float(rows[0]["rouge1_f1"]) == 1.0

    def test_corrupt_checkpoint(self, tmp_path, corpus, trained_run):
        blob = bytearray((trained_run / "final.ckpt").read_bytes())
        blob[-1] ^= 1
        (tmp_path / "bad.ckpt").write_bytes(bytes(blob))
        assert cli.main(["evaluate", str(tmp_path / "bad.ckpt"), "--corpus", str(corpus / "test.jsonl")]) == 4

    def test_missing_corpus(self, tmp_path, trained_run):
        assert cli.main(["evaluate", str(trained_run / "final.ckpt"), "--corpus", str(tmp_path / "x")]) == 3


class TestDecode:
    def test_defaults(self):
        args = cli.build_parser().parse_args(["decode", "c", "i", "--out", "o"])
        assert args.beam == 4 and args.max_tokens == 120

    def test_one_line_per_record_and_beam_one_greedy(self, tmp_path, corpus, trained_run):
        out = tmp_path / "d.txt"
        assert cli.main(["decode", str(trained_run / "final.ckpt"), str(corpus / "test.jsonl"),
                         "--out", str(out), "--beam", "1", "--max-tokens", "12"]) == 0
        lines = out.read_text().split("\n")[:-1]
        recs = read_corpus(corpus / "test.jsonl")
        assert len(lines) == len(recs)
        ck = load_checkpoint(trained_run / "final.ckpt")
        from hredlab.data import Vocabulary, decode_ids
        vocab = Vocabulary(ck.extra["vocab"])
        for line, r in zip(lines, recs):
            ex = encode_example(r.article, r.abstract, vocab)
            assert line == " ".join(decode_ids(greedy_decode(ck.model, ex, 12), vocab, ex.oovs))

    def test_empty_input(self, tmp_path, trained_run):
        (tmp_path / "empty.jsonl").write_text("")
        out = tmp_path / "d.txt"
        assert cli.main(["decode", str(trained_run / "final.ckpt"), str(tmp_path / "empty.jsonl"),
                         "--out", str(out)]) == 0
        assert out.read_bytes() == b""

    def test_empty_article_keeps_alignment(self, tmp_path, corpus, trained_run):
        recs = [Record([""], "x")] + read_corpus(corpus / "test.jsonl")[:1]
        write_corpus(tmp_path / "in.jsonl", recs)
        out = tmp_path / "d.txt"
        assert cli.main(["decode", str(trained_run / "final.ckpt"), str(tmp_path / "in.jsonl"),
                         "--out", str(out), "--max-tokens", "5"]) == 0
        lines = out.read_text().split("\n")
        assert lines[0] == "" and len(lines) == 3

    def test_not_a_checkpoint(self, tmp_path, corpus):
        (tmp_path / "x.ckpt").write_bytes(b"garbage")
        assert cli.main(["decode", str(tmp_path / "x.ckpt"), str(corpus / "test.jsonl"),
                         "--out", str(tmp_path / "o")]) == 4


class TestDiagnose:
    def test_trained_run(self, trained_run):
        assert cli.main(["diagnose", str(trained_run)]) == 0
        meta, rows = read_csv(trained_run / "diagnostics" / "weight_change.csv")
        assert meta["config"]["encoder.variant"] == "trained"
        for group in ("sentence_encoder", "document_encoder"):
            vals = [float(r["rel_change"]) for r in rows if r["group"] == group]
            assert len(vals) == 2 and all(v > 0 for v in vals)
        _, hist = read_csv(trained_run / "diagnostics" / "histograms.csv")
        assert list(hist[0]) == ["group", "kind", "bin_low", "bin_high", "count"]
        kinds = {(r["group"], r["kind"]) for r in hist}
        assert ("decoder", "weight") in kinds and ("decoder", "gradient") in kinds
        per_group = sum(int(r["count"]) for r in hist if r["group"] == "decoder" and r["kind"] == "weight")
        ck = load_checkpoint(trained_run / "final.ckpt")
        assert per_group == ck.model.registry.flat("decoder").size

    def test_matches_training_series(self, trained_run):
        cli.main(["diagnose", str(trained_run)])
        _, from_diag = read_csv(trained_run / "diagnostics" / "weight_change.csv")
        _, from_train = read_csv(trained_run / "weight_change.csv")
        key = lambda rows: sorted((r["group"], r["update_index"], r["rel_change"]) for r in rows)
        assert key(from_diag) == key(from_train)

    def test_frozen_run_zero_series(self, tmp_path, corpus):
        code, run = train(tmp_path, corpus, variant="random")
        assert code == 0 and cli.main(["diagnose", str(run)]) == 0
        _, rows = read_csv(run / "diagnostics" / "weight_change.csv")
        enc = [float(r["rel_change"]) for r in rows if r["group"].endswith("_encoder")]
        assert enc and all(v == 0.0 for v in enc)

    def test_missing_snapshots(self, tmp_path):
        assert cli.main(["diagnose", str(tmp_path)]) == 5


class TestSynthData:
    def test_writes_splits(self, tmp_path):
        assert cli.main(["synth-data", "--task", "keyword-copy", "--out", str(tmp_path), "--n-train", "3",
                         "--n-val", "2", "--n-test", "1"]) == 0
        assert [len(read_corpus(tmp_path / f"{s}.jsonl")) for s in ("train", "val", "test")] == [3, 2, 1]
