"""Command-line entry point: ``hredlab {synth-data,train,evaluate,decode,diagnose}``.

Exit codes
----------
0  success
2  bad configuration or usage
3  I/O failure (missing or malformed corpus, unwritable output)
4  checkpoint unreadable, corrupt, or of another version
5  no parameter snapshots found for ``diagnose``
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import config as C
from .checkpoint import load_checkpoint, read_tensors, save_checkpoint
from .data import (
    Record,
    Vocabulary,
    build_vocab,
    decode_ids,
    encode_corpus,
    encode_example,
    read_corpus,
    write_synth_corpus,
)
from .diagnostics import (
    relative_weight_change,
    weight_histogram,
    write_histogram_csv,
    write_weight_change_csv,
)
from .errors import CheckpointError, ContractError, DegenerateInputError
from .evaluation import beam_search, bootstrap_ci, perplexity, rouge
from .model import SummarizationModel
from .training import TrainState, Trainer

log = logging.getLogger("hredlab")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_CHECKPOINT, EXIT_SNAPSHOTS = 0, 2, 3, 4, 5

METRICS_HEADER = ("update", "train_ppl", "val_ppl")
EVAL_HEADER = ("n_examples", "perplexity", "rouge1_f1", "rouge2_f1", "rougeL_f1",
               "rouge1_ci_low", "rouge1_ci_high")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def _header_line(meta: dict) -> str:
    return "# " + json.dumps(meta, sort_keys=True) + "\n"


def _read_records(path: str | None, what: str) -> list[Record]:
    if path is None:
        raise CliError(EXIT_CONFIG, f"{what} path is not configured")
    try:
        return read_corpus(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {what} {path}: {exc}") from None
    except ValueError as exc:
        raise CliError(EXIT_IO, str(exc)) from None


def _load_ckpt(path: str):
    try:
        return load_checkpoint(path)
    except CheckpointError as exc:
        raise CliError(EXIT_CHECKPOINT, f"{path}: {exc}") from None


def _vocab_from(ckpt) -> Vocabulary:
    tokens = ckpt.extra.get("vocab")
    if tokens is None:
        raise CliError(EXIT_CHECKPOINT, "checkpoint carries no vocabulary")
    return Vocabulary(tokens)


# -- synth-data ------------------------------------------------------------------


def cmd_synth_data(args) -> int:
    try:
        paths = write_synth_corpus(args.out, args.task, args.n_train, args.n_val, args.n_test,
                                   args.vocab_size, args.seed)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write corpus to {args.out}: {exc}") from None
    for split, p in paths.items():
        print(f"{split}: {p}")
    return EXIT_OK


# -- train -------------------------------------------------------------------------


def cmd_train(args) -> int:
    try:
        cfg = C.load(args.config, args.set)
    except C.ConfigError as exc:
        raise CliError(EXIT_CONFIG, f"bad config: {exc}") from None
    for key in ("data.train", "data.val"):
        p = cfg[key]
        if p is not None and not Path(p).is_file():
            raise CliError(EXIT_IO, f"{key}: no such file {p}")
    if cfg["data.train"] is None:
        raise CliError(EXIT_CONFIG, "bad config: data.train is required")
    train_records = _read_records(cfg["data.train"], "training corpus")
    val_records = _read_records(cfg["data.val"], "validation corpus") if cfg["data.val"] else []

    out = Path(args.out)
    tcfg = C.train_config(cfg)
    meta = {"config": cfg}

    if args.resume:
        ckpt = _load_ckpt(args.resume)
        model, vocab = ckpt.model, _vocab_from(ckpt)
        trainer = Trainer(model, tcfg, ckpt.optimizer, ckpt.state)
    else:
        vocab = build_vocab(train_records, tcfg.vocab_size)
        model = SummarizationModel(C.model_config(cfg, len(vocab)))
        trainer = Trainer(model, tcfg)
    train = encode_corpus(train_records, vocab, tcfg.max_doc_tokens, tcfg.max_summary_tokens)
    val = encode_corpus(val_records, vocab, tcfg.max_doc_tokens, tcfg.max_summary_tokens)

    try:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
        vocab.save(out / "vocab.tsv")
        (out / "config.json").write_text(json.dumps(cfg, sort_keys=True, indent=2) + "\n")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write run directory {out}: {exc}") from None
    extra = {"vocab": vocab.itos[4:]}

    def on_interval(tr: Trainer, rec):
        save_checkpoint(out / "checkpoints" / f"update_{tr.state.update:06d}.ckpt", tr.model,
                        tr.optimizer, tr.state, cfg, extra, include_grads=True)

    try:
        result = trainer.train_loop(train, val, on_interval)
        save_checkpoint(out / "final.ckpt", model, trainer.optimizer, trainer.state, cfg, extra)
        with open(out / "metrics.csv", "w", newline="") as fh:
            fh.write(_header_line(meta))
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(METRICS_HEADER)
            for r in result.metrics:
                w.writerow([r.update, _fmt(r.train_ppl), _fmt(r.val_ppl)])
        with open(out / "weight_change.csv", "w", newline="") as fh:
            write_weight_change_csv(fh, result.weight_change, meta)
    except OSError as exc:
        raise CliError(EXIT_IO, f"I/O failure while training into {out}: {exc}") from None
    print(f"trained {trainer.state.update} updates; final val ppl {_fmt(result.final_val_ppl or float('nan'))}")
    return EXIT_OK


# -- evaluate / decode ---------------------------------------------------------------


def cmd_evaluate(args) -> int:
    ckpt = _load_ckpt(args.checkpoint)
    vocab = _vocab_from(ckpt)
    records = _read_records(args.corpus, "corpus")
    if args.limit:
        records = records[: args.limit]
    cfg = ckpt.config or {}
    examples = encode_corpus(records, vocab, cfg.get("train.max_doc_tokens", 400),
                             cfg.get("train.max_summary_tokens", 100))
    model = ckpt.model
    ppl = perplexity(model, examples) if examples else float("nan")
    scores = []
    for ex in examples:
        hyp = beam_search(model, ex, args.beam, args.max_tokens)
        scores.append(rouge(ex.summary_tokens, decode_ids(hyp.output, vocab, ex.oovs)))
    r1 = [s.rouge1.f1 for s in scores]
    row = {
        "n_examples": len(examples),
        "perplexity": ppl,
        "rouge1_f1": float(np.mean(r1)) if scores else float("nan"),
        "rouge2_f1": float(np.mean([s.rouge2.f1 for s in scores])) if scores else float("nan"),
        "rougeL_f1": float(np.mean([s.rougeL.f1 for s in scores])) if scores else float("nan"),
    }
    lo, hi = bootstrap_ci(r1, seed=cfg.get("run.seed", 0)) if scores else (float("nan"),) * 2
    row["rouge1_ci_low"], row["rouge1_ci_high"] = lo, hi
    for k in EVAL_HEADER:
        print(f"{k}: {row[k]}")
    if args.out:
        try:
            with open(args.out, "w", newline="") as fh:
                fh.write(_header_line({"config": cfg, "checkpoint": str(args.checkpoint),
                                       "corpus": str(args.corpus), "beam": args.beam,
                                       "max_tokens": args.max_tokens}))
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(EVAL_HEADER)
                w.writerow([row["n_examples"]] + [_fmt(row[k]) for k in EVAL_HEADER[1:]])
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}") from None
    return EXIT_OK


def cmd_decode(args) -> int:
    ckpt = _load_ckpt(args.checkpoint)
    vocab = _vocab_from(ckpt)
    records = _read_records(args.input, "input")
    cfg = ckpt.config or {}
    lines = []
    for r in records:
        try:
            ex = encode_example(r.article, r.abstract, vocab, cfg.get("train.max_doc_tokens", 400),
                                cfg.get("train.max_summary_tokens", 100))
        except ContractError:
            lines.append("")  # empty article: keep line alignment with the input
            continue
        hyp = beam_search(ckpt.model, ex, args.beam, args.max_tokens)
        lines.append(" ".join(decode_ids(hyp.output, vocab, ex.oovs)))
    try:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(line + "\n" for line in lines)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}") from None
    return EXIT_OK


# -- diagnose ------------------------------------------------------------------------


def snapshot_paths(run_dir: Path) -> list[Path]:
    return sorted((run_dir / "checkpoints").glob("update_*.ckpt"))


def cmd_diagnose(args) -> int:
    run_dir = Path(args.run_dir)
    paths = snapshot_paths(run_dir)
    if not paths:
        raise CliError(EXIT_SNAPSHOTS, f"no snapshots under {run_dir / 'checkpoints'}")
    snaps = []
    for p in paths:
        try:
            snaps.append(read_tensors(p))
        except CheckpointError as exc:
            raise CliError(EXIT_CHECKPOINT, f"{p}: {exc}") from None

    def group_values(tensors, kind, group):
        parts = [a.reshape(-1) for (k, n), a in tensors.items()
                 if k == kind and n.split(".", 1)[0] == group]
        return np.concatenate(parts) if parts else None

    header0, tensors0 = snaps[0]
    groups = []
    for (kind, name) in tensors0:
        g = name.split(".", 1)[0]
        if kind == "param" and g not in groups:
            groups.append(g)
    wanted = args.groups.split(",") if args.groups else groups

    series: dict[str, list[tuple[int, float]]] = {}
    for (h_prev, t_prev), (h_cur, t_cur) in zip(snaps, snaps[1:]):
        for g in wanted:
            before, after = group_values(t_prev, "param", g), group_values(t_cur, "param", g)
            if before is None:
                continue
            try:
                value = relative_weight_change(before, after)
            except DegenerateInputError:
                value = float("nan")
            series.setdefault(g, []).append((h_cur["update"], value))

    header_last, t_last = snaps[-1]
    hists = {}
    for g in wanted:
        for kind in ("param", "grad"):
            vals = group_values(t_last, kind, g)
            if vals is not None:
                hists[(g, "weight" if kind == "param" else "gradient")] = weight_histogram(vals, args.bins)

    out = Path(args.out) if args.out else run_dir / "diagnostics"
    meta = {"config": header_last.get("config", {}), "snapshots": [p.name for p in paths]}
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "weight_change.csv", "w", newline="") as fh:
            write_weight_change_csv(fh, series, meta)
        with open(out / "histograms.csv", "w", newline="") as fh:
            write_histogram_csv(fh, hists, dict(meta, update=header_last["update"]))
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write diagnostics to {out}: {exc}") from None
    print(f"wrote {out / 'weight_change.csv'} and {out / 'histograms.csv'}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hredlab", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-data", help="write a synthetic train/val/test corpus")
    s.add_argument("--task", choices=["lead1", "keyword-copy"], default="lead1")
    s.add_argument("--out", required=True)
    s.add_argument("--n-train", type=int, default=2000)
    s.add_argument("--n-val", type=int, default=100)
    s.add_argument("--n-test", type=int, default=100)
    s.add_argument("--vocab-size", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth_data)

    s = sub.add_parser("train", help="train a model from a config file")
    s.add_argument("config", nargs="?", help="YAML file of dotted keys")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    s.add_argument("--out", default="run", help="run directory")
    s.add_argument("--resume", help="continue from this checkpoint")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="perplexity and ROUGE of a checkpoint on a corpus")
    s.add_argument("checkpoint")
    s.add_argument("--corpus", required=True)
    s.add_argument("--beam", type=int, default=4)
    s.add_argument("--max-tokens", type=int, default=120)
    s.add_argument("--limit", type=int, default=None, help="score only the first N examples")
    s.add_argument("--out", help="CSV output path")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("decode", help="beam-search summaries, one per input record")
    s.add_argument("checkpoint")
    s.add_argument("input")
    s.add_argument("--out", required=True)
    s.add_argument("--beam", type=int, default=4)
    s.add_argument("--max-tokens", type=int, default=120)
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("diagnose", help="relative weight change and histograms from snapshots")
    s.add_argument("run_dir")
    s.add_argument("--bins", type=int, default=101)
    s.add_argument("--groups", help="comma-separated parameter groups (default: all)")
    s.add_argument("--out", help="output directory (default RUN_DIR/diagnostics)")
    s.set_defaults(func=cmd_diagnose)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ContractError as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
