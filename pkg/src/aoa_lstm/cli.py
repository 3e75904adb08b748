"""Command-line interface.

Exit codes: 0 success, 1 input error, 2 training aborted on a non-finite
loss, 3 verification (gradient check) failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import jsonfmt
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .classifier import LABELS
from .data import DataError, dataset_stats, format_stats_table, load_samples, make_sample
from .embeddings import build_vocab, load_pretrained, random_table
from .gradcheck import TOLERANCE, run_gradcheck
from .numerics import Rng, resolve_dtype
from .trainer import (
    TrainConfig,
    TrainingAborted,
    confusion_matrix,
    evaluate_accuracy,
    forward,
    majority_baseline,
    majority_label,
    multi_run,
    train,
)
from .visualize import heatmap_docs, render_ansi, render_html

log = logging.getLogger("aoa_lstm")

EXIT_OK, EXIT_INPUT, EXIT_ABORT, EXIT_VERIFY = 0, 1, 2, 3
FORMATS = ("semeval-xml", "tsv")


class InputError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get("AOA_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"AOA_SEED must be an integer, got {raw!r}") from None


def _load(path: str, fmt: str, what: str = "data"):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what} file not found: {path}")
    samples = load_samples(p, fmt)
    if not samples:
        raise InputError(f"{what} file {path} contains no samples")
    return samples


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    defaults = TrainConfig()
    for f in dataclasses.fields(TrainConfig):
        if f.name == "seed":
            continue
        flag = "--" + f.name.replace("_", "-")
        default = getattr(defaults, f.name)
        kwargs = {"type": type(default), "default": default, "help": f"(default {default})"}
        if f.name == "precision":
            kwargs["choices"] = ("float64", "float32")
        if f.name == "lr_schedule":
            kwargs["choices"] = ("best", "window")
        p.add_argument(flag, **kwargs)


def _config_from_args(args) -> TrainConfig:
    values = {f.name: getattr(args, f.name) for f in dataclasses.fields(TrainConfig) if hasattr(args, f.name)}
    return TrainConfig(**values)


def _embeddings(args, config: TrainConfig, samples):
    vocab = build_vocab(samples)
    rng = Rng(config.seed).derive("oov")
    dtype = resolve_dtype(config.precision)
    if args.embeddings:
        if not Path(args.embeddings).is_file():
            raise InputError(f"embeddings file not found: {args.embeddings}")
        return load_pretrained(args.embeddings, vocab, rng, config.oov_range, config.d_w, dtype)
    return random_table(vocab, config.d_w, rng, config.oov_range, dtype)


def cmd_train(args) -> int:
    config = _config_from_args(args)
    samples = _load(args.train, args.format, "training")
    table = _embeddings(args, config, samples)
    out = open(args.log, "w", encoding="utf-8") if args.log else sys.stdout
    try:
        def emit(record):
            out.write(jsonfmt.dumps(record) + "\n")
            out.flush()

        model, _ = train(config, samples, table, on_epoch=emit, timing=not args.no_timing)
    finally:
        if out is not sys.stdout:
            out.close()
    save_checkpoint(model, table.vocab, config, args.out)
    log.info("checkpoint written to %s", args.out)
    return EXIT_OK


def _print_confusion(cm: np.ndarray) -> None:
    width = max(len(x) for x in LABELS) + 2
    print("confusion matrix (rows: gold, columns: predicted)")
    print(" " * width + "".join(f"{lab:>{width}}" for lab in LABELS))
    for lab, row in zip(LABELS, cm):
        print(f"{lab:<{width}}" + "".join(f"{int(v):>{width}}" for v in row))


def cmd_eval(args) -> int:
    samples = _load(args.data, args.format)
    if args.majority:
        if not args.train:
            raise InputError("--majority requires --train")
        train_set = _load(args.train, args.format, "training")
        acc = majority_baseline(train_set, samples)
        print(f"majority label: {majority_label(train_set)}")
        print(f"accuracy: {acc:.6f}")
        return EXIT_OK
    if not args.model:
        raise InputError("--model is required unless --majority is given")
    ckpt = load_checkpoint(args.model)
    acc = evaluate_accuracy(ckpt.model, samples)
    print(f"accuracy: {acc:.6f}")
    _print_confusion(confusion_matrix(ckpt.model, samples))
    return EXIT_OK


def _find_occurrences(sentence: str, aspect: str) -> list[int]:
    hay, needle = sentence.lower(), aspect.lower()
    hits, k = [], hay.find(needle)
    while k >= 0 and needle:
        hits.append(k)
        k = hay.find(needle, k + len(needle))
    return hits


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.model)
    if (args.from_ is None) != (args.to is None):
        raise InputError("--from and --to must be given together")
    if args.from_ is not None:
        start, end = args.from_, args.to
    else:
        hits = _find_occurrences(args.sentence, args.aspect)
        if not hits:
            raise InputError(f"aspect {args.aspect!r} does not occur in the sentence")
        if len(hits) > 1:
            spans = ", ".join(f"[{h}, {h + len(args.aspect)})" for h in hits)
            raise InputError(f"aspect {args.aspect!r} occurs {len(hits)} times at {spans}; pass --from/--to")
        start, end = hits[0], hits[0] + len(args.aspect)
    try:
        # the polarity field is required by Sample but unused for prediction
        sample = make_sample(args.sentence, start, end, "neutral", args.aspect)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    probs, trace, _ = forward(ckpt.model, sample)
    record = {
        "label": LABELS[int(np.argmax(probs))],
        "probs": [float(p) for p in probs],
        "tokens": list(sample.sentence_tokens),
        "gamma": [float(g) for g in trace.gamma],
    }
    if args.trace:
        record["trace"] = trace.to_json(sample.sentence_tokens)
    print(jsonfmt.dumps(record))
    return EXIT_OK


def cmd_visualize(args) -> int:
    ckpt = load_checkpoint(args.model)
    samples = _load(args.data, args.format)
    docs = heatmap_docs(ckpt.model, samples)
    if args.ansi:
        sys.stdout.write(render_ansi(docs))
    if args.out:
        try:
            Path(args.out).write_text(render_html(docs), encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot write {args.out}: {exc}") from None
    elif not args.ansi:
        raise InputError("give --out for HTML output or --ansi for terminal output")
    return EXIT_OK


def _parse_dims(text: str) -> tuple[int, int, int, int]:
    try:
        dims = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("dims must be comma-separated integers d_w,d_h,n_max,m_max") from None
    if len(dims) != 4 or min(dims) < 1:
        raise argparse.ArgumentTypeError("dims must be four positive integers d_w,d_h,n_max,m_max")
    return dims


def cmd_gradcheck(args) -> int:
    d_w, d_h, n_max, m_max = args.dims
    report = run_gradcheck(args.seed, d_w, d_h, n_max, m_max, corrupt=args.corrupt_gradient)
    print(f"parameters: {report.n_params} (checked {report.n_checked} with |g| > 1e-8)")
    print(f"max relative error: {report.max_rel_error:.6e}")
    if report.passed:
        print(f"PASS (tolerance {TOLERANCE:g})")
        return EXIT_OK
    print(f"FAIL (tolerance {TOLERANCE:g}); worst coordinates:")
    for name, a, n, r in report.worst:
        print(f"  {name:<24} analytic {a: .10e}  numeric {n: .10e}  rel {r:.3e}")
    return EXIT_VERIFY


def cmd_stats(args) -> int:
    rows = []
    for path in args.data:
        rows.append((Path(path).stem, dataset_stats(_load(path, args.format))))
    sys.stdout.write(format_stats_table(rows))
    return EXIT_OK


def cmd_multirun(args) -> int:
    config = _config_from_args(args)
    train_set = _load(args.train, args.format, "training")
    test_set = _load(args.test, args.format, "test")
    table = _embeddings(args, config, train_set)
    summary = multi_run(
        config, args.runs, train_set, test_set, table, on_run=lambda i, a: print(f"run {i + 1}: {a:.6f}", flush=True)
    )
    print(f"majority baseline: {majority_baseline(train_set, test_set):.6f}")
    print(f"best (mean±std): {summary}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aoa-lstm", description="Attention-over-attention LSTM sentiment classifier")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--train", required=True)
    p.add_argument("--format", choices=FORMATS, default="semeval-xml")
    p.add_argument("--embeddings", help="GloVe-style text vectors; random U(-oov_range, oov_range) rows if omitted")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--log", help="write the JSON-lines history here instead of stdout")
    p.add_argument("--no-timing", action="store_true", help="omit wall_seconds from the history")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy and confusion matrix of a checkpoint")
    p.add_argument("--model")
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=FORMATS, default="semeval-xml")
    p.add_argument("--majority", action="store_true", help="report the majority-label baseline instead")
    p.add_argument("--train", help="training file for --majority")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one sentence/aspect pair")
    p.add_argument("--model", required=True)
    p.add_argument("--sentence", required=True)
    p.add_argument("--aspect", required=True)
    p.add_argument("--from", dest="from_", type=int)
    p.add_argument("--to", type=int)
    p.add_argument("--trace", action="store_true", help="include the full attention trace")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("visualize", help="attention heatmap as HTML or ANSI")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=FORMATS, default="semeval-xml")
    p.add_argument("--out")
    p.add_argument("--ansi", action="store_true")
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--dims", type=_parse_dims, default=(4, 3, 6, 2), help="d_w,d_h,n_max,m_max (default 4,3,6,2)")
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("stats", help="per-polarity counts")
    p.add_argument("--data", required=True, action="append")
    p.add_argument("--format", choices=FORMATS, default="semeval-xml")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("multirun", help="k train+test runs, reported as best (mean±std)")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--format", choices=FORMATS, default="semeval-xml")
    p.add_argument("--embeddings")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=_default_seed())
    _add_config_flags(p)
    p.set_defaults(func=cmd_multirun)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except TrainingAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (InputError, DataError, CheckpointError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
