"""Command-line entry point.

    landau-lab <experiment> --config <path> [--out <dir>] [--seed <n>] [--quiet] [--plots]
    landau-lab plot <dir>

Exit codes: 0 ran (audit failures are recorded in summary.json), 2 usage or
configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback

from .config import EXPERIMENTS, ConfigError, parse_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="landau-lab", description="Perturbation experiments around Landau solutions.")
    p.add_argument("experiment", choices=EXPERIMENTS + ("plot",), help="experiment to run, or 'plot'")
    p.add_argument("target", nargs="?", help="output directory (plot only)")
    p.add_argument("--config", help="config file (section.key = value lines)")
    p.add_argument("--out", help="output directory (overrides run.out)")
    p.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")
    p.add_argument("--plots", action="store_true", help="also render PNG figures from the CSVs")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    log = (lambda s: None) if args.quiet else (lambda s: print(s, file=sys.stderr))

    if args.experiment == "plot":
        if not args.target:
            print("landau-lab plot: missing output directory", file=sys.stderr)
            return EXIT_CONFIG
        from .plotting import render

        try:
            for path in render(args.target):
                log(f"wrote {path}")
        except (OSError, ValueError, KeyError) as exc:
            print(f"landau-lab plot: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        return EXIT_OK

    if args.target is not None:
        print("landau-lab: unexpected positional argument", file=sys.stderr)
        return EXIT_CONFIG
    if not args.config:
        print("landau-lab: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(args.config)
        updates = {"run__experiment": args.experiment}
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be nonnegative", key="run.seed")
            updates["run__seed"] = args.seed
        if args.out is not None:
            updates["run__out"] = args.out
        cfg = cfg.replace(**updates)
    except ConfigError as exc:
        print(f"landau-lab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .experiments import run_experiment

    try:
        outcome, path = run_experiment(cfg, log=log)
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        if not args.quiet:
            traceback.print_exc()
        print(f"landau-lab: {args.experiment} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.plots:
        from .plotting import render

        render(path)
    if not args.quiet:
        failed = [k for k, m in outcome.metrics.items() if not m["passed"]]
        print(json.dumps({"out": str(path), "failed": failed}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
