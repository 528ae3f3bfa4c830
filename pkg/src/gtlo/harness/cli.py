"""Command line entry point: ``gtlo train|oracle|compare|hypervolume``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys

from gtlo.core import ConfigError, ContractViolation, TrainingDivergence
from gtlo.envs import DstConfig, SurrogateConfig, load_layout
from gtlo.harness.config import load_config
from gtlo.harness.runner import DEFAULT_REFS, compare, fmt, train, write_csv
from gtlo.metrics import dst_pareto_oracle, hypervolume_2d, surrogate_pareto_oracle

EXIT_CONFIG, EXIT_DIVERGED, EXIT_INPUT = 2, 3, 4


def _ref(text):
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"reference point must look like '0,-25', got {text!r}") from None
    return a, b


def _parser():
    p = argparse.ArgumentParser(prog="gtlo", description="Generalized thresholded lexicographic MORL experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one configured run and write its artifacts")
    t.add_argument("--config", help="flat TOML run configuration")
    t.add_argument("--seed", type=int)
    t.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")

    o = sub.add_parser("oracle", help="print the exact Pareto front of an environment")
    o.add_argument("env", choices=("dst", "surrogate"))
    o.add_argument("--ref", type=_ref, help="hypervolume reference point, e.g. 0,-25")
    o.add_argument("--context", type=int, default=None, help="surrogate context bin (default: all)")
    o.add_argument("--layout", help="DST layout file")
    o.add_argument("--out", help="also write the front to this CSV")

    c = sub.add_parser("compare", help="aggregate finished runs per method")
    c.add_argument("runs", nargs="+", help="run directories")
    c.add_argument("--out", help="write the long-format table (method, seed, step, metric, value) here")

    h = sub.add_parser("hypervolume", help="hypervolume of the points in a CSV")
    h.add_argument("csv")
    h.add_argument("--ref", type=_ref, required=True)
    h.add_argument("--columns", default="ret_0,ret_1", help="two column names (default ret_0,ret_1)")
    return p


def _cmd_train(args):
    cfg = load_config(args.config, args.overrides, seed=args.seed)
    record = train(cfg)
    final = record.rows[-1]
    print(f"run {final['run_id']} step {final['step']}: hypervolume={final['hypervolume']:.6g} "
          f"recall={final['recall']:.4g} precision={final['precision']:.4g}")
    print(f"artifacts in {record.output_dir}")
    return 0


def _cmd_oracle(args):
    if args.env == "dst":
        cfg = load_layout(args.layout) if args.layout else DstConfig()
        fronts = {0: dst_pareto_oracle(cfg)}
    else:
        cfg = SurrogateConfig()
        ctxs = range(cfg.context_bins) if args.context is None else [args.context]
        fronts = {c: surrogate_pareto_oracle(cfg, c) for c in ctxs}
    ref = args.ref or DEFAULT_REFS[args.env]
    rows = []
    for c, front in fronts.items():
        print(f"context {c}: {len(front)} points, hypervolume {fmt(hypervolume_2d(front, ref))} w.r.t. {ref}")
        for p in front:
            print("  " + ", ".join(fmt(v) for v in p))
            rows.append((c, *p))
    if args.out:
        write_csv(args.out, ("context", "ret_0", "ret_1"), rows)
    return 0


def _cmd_compare(args):
    summary, long_rows = compare(args.runs)
    if not summary:
        print("no completed runs found", file=sys.stderr)
        return EXIT_INPUT
    cols = ["method", "runs", "hypervolume_mean", "hypervolume_std", "precision_mean", "precision_std",
            "recall_mean", "recall_std", "f1_mean", "f1_std", "steps_to_full_front_median"]
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(cols)
    for entry in summary:
        writer.writerow([fmt(entry[k]) for k in cols])
    if args.out:
        write_csv(args.out, ("method", "seed", "step", "metric", "value"), long_rows)
    return 0


def _cmd_hypervolume(args):
    names = [n.strip() for n in args.columns.split(",")]
    with open(args.csv, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [n for n in names if n not in (reader.fieldnames or [])]
        if missing:
            print(f"{args.csv}: missing columns {', '.join(missing)}", file=sys.stderr)
            return EXIT_INPUT
        points = [tuple(float(row[n]) for n in names) for row in reader]
    print(fmt(hypervolume_2d(points, args.ref)))
    return 0


COMMANDS = {"train": _cmd_train, "oracle": _cmd_oracle, "compare": _cmd_compare, "hypervolume": _cmd_hypervolume}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergence as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ContractViolation, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
