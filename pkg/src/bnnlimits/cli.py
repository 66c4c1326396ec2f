"""Command-line entry point for the convergence experiments.

Subcommands: prior-convergence, posterior-convergence, gaussian-baseline,
compare, diagnostics. Exit codes: 0 success, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import (
    ConfigError,
    ExperimentConfig,
    emit_figure_data,
    run_bound_diagnostics,
    run_comparison,
    run_gaussian_baseline,
    run_posterior_convergence,
    run_prior_convergence,
)
from .kernels import KernelDegeneracyError
from .posteriors import LinearAlgebraError
from .samplers import SamplerError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

RUNNERS = {
    "prior-convergence": run_prior_convergence,
    "posterior-convergence": run_posterior_convergence,
    "gaussian-baseline": run_gaussian_baseline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bnnlimits",
        description="Width-convergence experiments for Bayesian neural "
        "networks and their Gaussian/Student-t process limits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (
        "prior-convergence",
        "posterior-convergence",
        "gaussian-baseline",
        "compare",
        "diagnostics",
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file path")
        p.add_argument("--seed", type=int, default=None, help="override RNG seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel width jobs")
    return parser


def load_config(path: str | None, seed: int | None) -> ExperimentConfig:
    d = {}
    if path is not None:
        try:
            with open(path) as f:
                d = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON in {path}: {e}") from e
        if not isinstance(d, dict):
            raise ConfigError("config file must contain a JSON object")
    if seed is not None:
        d["seed"] = seed
    return ExperimentConfig.from_dict(d)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command in RUNNERS:
            report = RUNNERS[args.command](cfg, jobs=args.jobs)
        elif args.command == "compare":
            report = run_comparison(cfg)
        else:
            report = run_bound_diagnostics(cfg)
        paths = emit_figure_data(report, args.out, cfg)
    except (KernelDegeneracyError, LinearAlgebraError, SamplerError,
            FloatingPointError, RuntimeError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
