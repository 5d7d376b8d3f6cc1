"""Command line entry point: ``landscape <experiment> [options]``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigError, LandscapeError
from .config import EXPERIMENTS, GRID_MEANING, build_config, load_toml
from .experiments import run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="landscape", description="Count stationary points of random least-squares landscapes.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment (grid = {GRID_MEANING[name]} values)")
        p.add_argument("--config", help="TOML file with experiment settings")
        p.add_argument("--seed", type=int, help="master seed (falls back to $LANDSCAPE_SEED, then 0)")
        p.add_argument("--samples", type=int, help="number of random instances")
        p.add_argument("--out", dest="output_dir", help="output directory")
        p.add_argument("--workers", type=int, help="worker processes (results do not depend on this)")
        p.add_argument("--n", dest="N", type=int, help="sphere dimension N")
        p.add_argument("--m", dest="M", type=int, help="number of rows M (> N)")
        p.add_argument("--sigma2", type=float, help="noise variance")
        p.add_argument("--grid", help=f"{GRID_MEANING[name]} values: a:b:steps[:log] or comma list")
        p.add_argument("--bins", type=int, help="histogram bins")
        p.add_argument("--rho-samples", dest="rho_samples", type=int,
                       help="spectra used to estimate the mean eigenvalue density")
        p.add_argument("--emit-gnuplot", dest="emit_gnuplot", action="store_true", default=None,
                       help="also write a gnuplot script for the CSVs")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        file_values = load_toml(args.config) if args.config else {}
        cfg = build_config(
            args.experiment,
            file_values,
            seed=args.seed,
            samples=args.samples,
            output_dir=args.output_dir,
            workers=args.workers,
            N=args.N,
            M=args.M,
            sigma2=args.sigma2,
            grid=args.grid,
            bins=args.bins,
            rho_samples=args.rho_samples,
            emit_gnuplot=args.emit_gnuplot,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LandscapeError, ArithmeticError) as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for f in result.files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
