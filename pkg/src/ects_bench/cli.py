"""Command-line entry point.

Subcommands:
  prepare  convert a train/test file pair into a dataset directory with a
           manifest, optionally z-normalizing and/or imbalancing
  screen   run the information-gain dataset screen against a manifest
  run      execute a benchmark config and write all reports
  report   recompute derived reports from an existing results directory

Exit codes: 0 success, 1 config error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import sys

from . import bench, data
from .errors import ConfigError, DataError, NumericError


def _cmd_prepare(args) -> int:
    dataset = data.load_dataset(args.train, args.test, args.name or "")
    if args.znorm:
        dataset = data.znormalize_dataset(dataset)
    if args.imbalance is not None:
        labels = [s.label for s in dataset.train]
        minority = min(set(labels), key=labels.count)
        dataset = data.make_imbalanced(dataset, minority, args.imbalance, args.seed)
    manifest = data.save_dataset(dataset, args.out)
    print(f"wrote {manifest['train_file']} ({len(dataset.train)} series), "
          f"{manifest['test_file']} ({len(dataset.test)} series), K={dataset.num_classes}")
    return 0


def _cmd_screen(args) -> int:
    dataset = data.load_manifest(args.manifest)
    gain_half, gain_full, accepted = data.information_gain_screen(dataset, seed=args.seed)
    print(f"auc_gain_half={gain_half:.4f} auc_gain_full={gain_full:.4f} "
          f"accepted={'yes' if accepted else 'no'}")
    return 0


def _cmd_run(args) -> int:
    config = bench.parse_config(args.config)
    bundle = bench.run_benchmark(config)
    written = bench.write_reports(bundle, config.output_dir, emit_svg=args.svg)
    for path in written:
        print(path)
    for name, reason in bundle.skipped:
        print(f"skipped {name}: {reason}", file=sys.stderr)
    return 0


def _cmd_report(args) -> int:
    import os

    records = bench.load_records_csv(os.path.join(args.results, "records.csv"))
    timelines = bench.load_timelines_json(os.path.join(args.results, "timelines.json"))
    bundle = bench.bundle_from_records(records, timelines)
    for path in bench.write_reports(bundle, args.out, emit_svg=args.svg):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ects-bench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="ingest and preprocess a dataset")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--name", default="")
    p.add_argument("--znorm", action="store_true")
    p.add_argument("--imbalance", type=float, default=None, metavar="FRACTION")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_prepare)

    p = sub.add_parser("screen", help="information-gain dataset screen")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_screen)

    p = sub.add_parser("run", help="run a benchmark config")
    p.add_argument("--config", required=True)
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="recompute reports from raw records")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
