"""Command-line entry point: ``recurrct <stage> --config <path> [overrides]``.

Exit codes: 0 success, 1 validation error or missing upstream stage, 2 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import RecurrctError
from .pipeline import STAGES, Pipeline, PipelineConfig

log = logging.getLogger("recurrct")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recurrct", description="Recurrence-plot embedding pipeline.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="pipeline config JSON")
    common.add_argument("--network", help="restrict to one network (name as in the atlas)")
    common.add_argument("--seed", type=int, help="seed for cohort, split, initialization and shuffling")
    common.add_argument("--epochs", type=int, help="training epochs for both models")
    common.add_argument("--tau", type=int, help="fixed embedding lag (skips lag selection)")
    common.add_argument("--dim", type=int, help="fixed embedding dimension (skips Cao's method)")
    common.add_argument("--dmax", type=int, help="largest dimension tried by Cao's method")
    common.add_argument("--maxlag", type=int, help="largest lag tried by lag selection")
    common.add_argument("--target-rr", type=float, help="recurrence rate for RQA thresholding")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="stage", required=True)
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")
    sub.add_parser("run", parents=[common], help="run every stage in order")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = PipelineConfig.load(args.config).with_overrides(
            network=args.network, seed=args.seed, epochs=args.epochs, tau=args.tau, dim=args.dim,
            d_max=args.dmax, max_lag=args.maxlag, target_rr=args.target_rr, out_dir=args.out)
        pipe = Pipeline(cfg)
        if args.stage == "run":
            print(pipe.run_all(), end="")
        else:
            result = pipe.run_stage(args.stage)
            if args.stage == "eval":
                print(result, end="")
    except (RecurrctError, ValueError, KeyError) as exc:
        print(f"recurrct: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"recurrct: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
