"""Command-line entry point.

    tnneig --preset ho2d --seed 1 --out results/ho2d
    tnneig --config my_run.json --steps-adam 500 --steps-lbfgs 50

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys

from . import __version__, config, report, train
from .errors import (CheckpointError, ConfigError, DegenerateComponentError,
                     NonFiniteError, NotPositiveDefiniteError, QuadratureError,
                     TrainingStepError)

_NUMERICAL = (TrainingStepError, NonFiniteError, NotPositiveDefiniteError,
              DegenerateComponentError, QuadratureError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tnneig",
        description="Train tensor-network eigensolvers for separable "
                    "high-dimensional eigenvalue problems.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", metavar="FILE",
                        help="JSON config file (schema version 1)")
    parser.add_argument("--preset", choices=sorted(config.PRESETS),
                        help="problem preset (overrides the config file)")
    parser.add_argument("--seed", type=int, help="rng seed")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("--steps-adam", type=int, dest="adam_steps",
                        help="number of Adam steps")
    parser.add_argument("--steps-lbfgs", type=int, dest="lbfgs_steps",
                        help="number of L-BFGS iterations")
    parser.add_argument("--resume", metavar="CKPT",
                        help="checkpoint file to initialize parameters from")
    parser.add_argument("--quiet", action="store_true",
                        help="no progress output, no table on stdout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {key: getattr(args, key) for key in
                 ("seed", "out", "adam_steps", "lbfgs_steps", "resume")}
    try:
        cfg = config.load_config(args.config, args.preset, overrides)
    except ConfigError as exc:
        print(f"tnneig: config error: {exc}", file=sys.stderr)
        return 2

    progress = None
    if not args.quiet:
        def progress(step, value):
            print(f"step {step:>8d}  loss {value: .12e}", file=sys.stderr)

    try:
        result = train.run(cfg, progress=progress)
    except (ConfigError, CheckpointError) as exc:
        print(f"tnneig: config error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL as exc:
        print(f"tnneig: numerical failure: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostics", None)
        if diag:
            print(f"tnneig: diagnostics: {diag}", file=sys.stderr)
        return 3
    paths = report.report_emit(result, cfg.out, quiet=args.quiet)
    if not args.quiet:
        print(f"results written to {paths['json']}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
