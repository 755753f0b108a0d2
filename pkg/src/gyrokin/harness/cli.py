"""Command line entry point.

    gyrokin <experiment> [--config cfg.ini] [--out results.csv] [--no-plots]
    gyrokin --list

Exit codes: 0 all experiment checks passed, 1 a check failed (the failing
row or quantity is printed), 2 unusable invocation or config.
"""

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .experiments import experiment_names, run_experiment


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gyrokin",
        description="run a registered verification experiment")
    parser.add_argument("experiment", nargs="?",
                        help="experiment name (see --list)")
    parser.add_argument("--config", type=Path, default=None,
                        help="INI config with parameter overrides")
    parser.add_argument("--out", type=Path, default=None,
                        help="CSV output path (default results/<name>.csv)")
    parser.add_argument("--list", action="store_true",
                        help="list experiment names and exit")
    parser.add_argument("--no-plots", action="store_true",
                        help="skip figure rendering")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.list:
        for name in experiment_names():
            print(name)
        return 0
    if not args.experiment:
        parser.print_usage(sys.stderr)
        return 2
    if args.experiment not in experiment_names():
        print(f"error: unknown experiment {args.experiment!r}; "
              f"choose from: {', '.join(experiment_names())}", file=sys.stderr)
        return 2

    params = {}
    if args.config is not None:
        try:
            params = load_config(args.config)
        except (ConfigError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2

    out = args.out or Path("results") / f"{args.experiment}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)

    try:
        table = run_experiment(args.experiment, params)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    table.to_csv(out)
    if not args.no_plots:
        from .plots import render_figure
        render_figure(table, out.with_suffix(".png"))

    for key, value in table.footer:
        print(f"{key} = {value}")
    if table.passed:
        print(f"{args.experiment}: PASS ({len(table.rows)} rows) -> {out}")
        return 0
    for msg in table.failures:
        print(f"{args.experiment}: FAIL {msg}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
