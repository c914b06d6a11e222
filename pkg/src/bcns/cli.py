"""Command line entry point.

    bcns <scenario> [--config path] [--out dir] [--workers n] [--seed k]
    bcns fit-report <results.csv> --window T1 T2

Scenarios: lp-verify, operator-verify, linear-estimates, linear-decay,
local-existence, global-bounds, weighted-bounds.  Verbosity via the BCNS_LOG
environment variable (error, warn, info, debug).  Exit codes: 0 all scenario
assertions passed, 1 an assertion failed (named in summary.json), 2 invalid
configuration or usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from bcns.experiments.config import ConfigError, load_config, scenario_names

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = os.environ.get("BCNS_LOG", "warn").lower()
    if level not in _LOG_LEVELS:
        level = "warn"
    logging.basicConfig(level=_LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcns", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in scenario_names():
        sp = sub.add_parser(name, help=f"run the {name} scenario")
        sp.add_argument("--config", default=None, help="JSON config (merged over scenario defaults)")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--workers", type=int, default=None, help="FFT worker threads")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
    fr = sub.add_parser("fit-report", help="fit decay exponents to series in a results.csv")
    fr.add_argument("csv", help="path to a results.csv produced by a scenario")
    fr.add_argument("--window", type=float, nargs=2, required=True, metavar=("T1", "T2"))
    fr.add_argument("--series", nargs="*", default=None, help="restrict to these series names")
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = _build_parser().parse_args(argv)
    if args.command == "fit-report":
        from bcns.experiments.report import fit_report, render_fit_table

        try:
            fits = fit_report(args.csv, tuple(args.window), args.series)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(render_fit_table(fits))
        print(json.dumps(fits, indent=2, sort_keys=True))
        return 0

    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    try:
        cfg = load_config(args.command, args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    from bcns.experiments.runner import run

    return run(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
