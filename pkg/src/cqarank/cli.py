"""Command-line entry points (``python -m cqarank <command>``)."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from typing import Optional, Sequence

import numpy as np

from . import harness
from .corpus import class_distribution, emit_sql, group_threads, read_records
from .features import FEATURE_NAMES, correlation_table, feature_matrix, select_features, write_feature_csv
from .metrics import evaluate_queries, read_run_csv
from .textproc import strip_html
from .vectorize import load_embeddings, oov_report


def _cmd_ingest(args) -> int:
    records = read_records(args.data, default_year=args.default_year)
    threads, discarded = group_threads(records)
    accepted, rejected = class_distribution(records)
    sizes = [len(t.answers) for t in threads]
    print(f"records: {len(records)}")
    print(f"accepted: {accepted}  not accepted: {rejected}")
    print(f"rankable threads: {len(threads)}  discarded records: {discarded}")
    if sizes:
        print(f"answers per thread: min {min(sizes)}, mean {np.mean(sizes):.3f}, max {max(sizes)}")
    return 0


def _cmd_emit_sql(args) -> int:
    sys.stdout.write(emit_sql(args.accepted, args.year, args.limit))
    return 0


def _cmd_features(args) -> int:
    records = read_records(args.data, default_year=args.default_year)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        write_feature_csv(records, fh)
    table = correlation_table(feature_matrix(records), [int(r.a_accepted) for r in records])
    lines = ["feature,r"] + [f"{name},{table[name]:.6f}" for name in FEATURE_NAMES if name in table]
    text = "\n".join(lines) + "\n"
    if args.correlations is None:
        sys.stdout.write(text)
    else:
        with open(args.correlations, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return 0


def _cmd_eda(args) -> int:
    records = read_records(args.data, default_year=args.default_year)
    table = correlation_table(feature_matrix(records), [int(r.a_accepted) for r in records])
    for name, r in sorted(table.items(), key=lambda item: item[1]):
        print(f"{name:28s} {r:+.6f}")
    selected = select_features(table, args.threshold)
    print(f"selected (|r| > {args.threshold}): {', '.join(selected) if selected else '(none)'}")
    return 0


def _config_from_args(args) -> harness.ExperimentConfig:
    config = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    overrides = {}
    for key in ("train_path", "test_path", "embedding_path", "output_dir", "seed", "model", "features"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "axis", None) is not None:
        overrides["sweep_axis"] = args.axis
        overrides["axis_values"] = tuple(args.values) if args.values else ()
        if not args.config and args.model is None:
            overrides["model"] = "neural"
    return dataclasses.replace(config, **overrides)


def _cmd_train(args) -> int:
    config = _config_from_args(args)
    result = harness.run_experiment(config)
    sys.stdout.write(harness.emit_report([(result.name, result.report)], args.format))
    return 0


def _cmd_evaluate(args) -> int:
    with open(args.run, encoding="utf-8") as fh:
        queries = read_run_csv(fh.read())
    sys.stdout.write(harness.emit_report([(args.name, evaluate_queries(queries))], args.format))
    return 0


def _cmd_sweep(args) -> int:
    config = _config_from_args(args)
    report = harness.run_sweep(config)
    sys.stdout.write(harness.emit_report(report, args.format))
    for row in report.rows:
        print(f"# {report.axis}={row.name}: {row.seconds:.1f}s", file=sys.stderr)
    return 0


def _cmd_oov(args) -> int:
    table = load_embeddings(args.embeddings, args.dimension)
    texts = []
    for path in args.data:
        for rec in read_records(path, default_year=args.default_year):
            texts.append(rec.q_title + "\n" + strip_html(rec.q_body))
            texts.append(strip_html(rec.a_body))
    report = oov_report(texts, table, n_examples=args.examples)
    print(report)
    if report.miss_examples:
        print("examples: " + " ".join(report.miss_examples))
    return 0


def _experiment_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--train", dest="train_path")
    p.add_argument("--test", dest="test_path")
    p.add_argument("--embeddings", dest="embedding_path")
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=("csv", "markdown"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cqarank", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate records, thread statistics, class distribution")
    p.add_argument("data")
    p.add_argument("--default-year", type=int)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("emit-sql", help="print the extraction query")
    flag = p.add_mutually_exclusive_group(required=True)
    flag.add_argument("--accepted", dest="accepted", action="store_true")
    flag.add_argument("--not-accepted", dest="accepted", action="store_false")
    p.add_argument("--year", type=int, required=True)
    p.add_argument("--limit", type=int, required=True)
    p.set_defaults(func=_cmd_emit_sql)

    p = sub.add_parser("features", help="write the feature CSV and print class correlations")
    p.add_argument("data")
    p.add_argument("--out", required=True)
    p.add_argument("--correlations")
    p.add_argument("--default-year", type=int)
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("eda", help="correlation table and threshold selection")
    p.add_argument("data")
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--default-year", type=int)
    p.set_defaults(func=_cmd_eda)

    p = sub.add_parser("train", help="train one model and evaluate it on the test threads")
    _experiment_args(p)
    p.add_argument("--model", choices=harness.MODEL_KINDS)
    p.add_argument("--features", choices=harness.FEATURE_MODES)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="metrics for a q_id,a_id,gold,score run file")
    p.add_argument("--run", required=True)
    p.add_argument("--name", default="run")
    p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="ablation sweep over one axis")
    _experiment_args(p)
    p.add_argument("--axis", required=True, choices=harness.SWEEP_AXES[1:])
    p.add_argument("--values", nargs="+", type=harness._parse_scalar)
    p.set_defaults(func=_cmd_sweep, model=None, features=None)

    p = sub.add_parser("oov-report", help="embedding coverage of the corpus vocabulary")
    p.add_argument("data", nargs="+")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--dimension", type=int, default=100)
    p.add_argument("--examples", type=int, default=20)
    p.add_argument("--default-year", type=int)
    p.set_defaults(func=_cmd_oov)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
