"""Command-line front end.

Subcommands: ``run`` executes a benchmark manifest, ``report`` recomputes
derived artifacts from a run directory, ``list-pipelines`` prints a search
family's enumeration. Exit codes: 0 ok, 1 config error, 2 partial
failures, 3 fatal.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import report as report_mod
from . import runner, spaces
from .dataset import load_manifest
from .errors import ConfigError, DataValidationError, SpecbenchError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2
EXIT_FATAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a benchmark manifest")
    p_run.add_argument("--config", required=True, help="manifest file (YAML or JSON)")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--models", default=None, help="comma-separated subset")
    p_run.add_argument("--datasets", default=None, help="comma-separated subset")
    p_run.add_argument("--resume", action="store_true",
                       help="skip (dataset, model) cells that already have artifacts")

    p_rep = sub.add_parser("report", help="recompute derived artifacts")
    p_rep.add_argument("--run", required=True, help="run directory")
    p_rep.add_argument("--reference", default=None, help="reference model for relative metrics")

    p_list = sub.add_parser("list-pipelines", help="print a search family's enumeration")
    p_list.add_argument("family", help="linear or tabular")
    return parser


def cmd_run(args) -> int:
    manifest = load_manifest(args.config)
    if args.seed is not None:
        manifest = type(manifest)(
            datasets=manifest.datasets, models=manifest.models,
            folds=manifest.folds, workers=manifest.workers,
            seed=args.seed, external_commands=manifest.external_commands,
        )
    result = runner.run_benchmark(
        manifest,
        Path(args.out),
        workers=args.workers,
        models=args.models.split(",") if args.models else None,
        datasets=args.datasets.split(",") if args.datasets else None,
        resume=args.resume,
        manifest_path=args.config,
    )
    print(f"done: {result.n_cells} cells, {result.n_failed} failed, "
          f"{result.n_skipped} resumed -> {result.out_dir}")
    return EXIT_PARTIAL if result.n_failed else EXIT_OK


def cmd_report(args) -> int:
    report_mod.generate_reports(Path(args.run), reference=args.reference)
    print(f"report artifacts written to {args.run}")
    return EXIT_OK


def cmd_list_pipelines(args) -> int:
    try:
        space = spaces.search_space(args.family)
    except SpecbenchError:
        print(f"unknown family {args.family!r}; choose linear or tabular", file=sys.stderr)
        return EXIT_CONFIG
    phase1 = spaces.enumerate_phase1(space)
    for pipe in phase1:
        print(pipe)
    scale = max(1, len(space.phase2_scale))
    print(f"phase1: {len(phase1)} pipelines")
    if space.phase2_scale:
        print(f"phase2: top-{space.top_k} x {len(space.phase2_repr)} x {len(space.phase2_scale)}")
    else:
        print(f"phase2: top-{space.top_k} x {len(space.phase2_repr)}")
    total = len(phase1) + space.top_k * len(space.phase2_repr) * scale
    print(f"total pipelines: {total}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "report":
            return cmd_report(args)
        return cmd_list_pipelines(args)
    except (ConfigError, DataValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SpecbenchError as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
