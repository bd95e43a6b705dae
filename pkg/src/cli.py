"""
Command-line entry point: run a configured experiment, the reference suite, or a one-off bound.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from . import bounds
from .config import describe_config, load_config, resolve_seed
from .experiments import plot_report, run_experiment
from .reports import write_report
from .suite import SUITE_SEED, format_matrix, reference_suite
from .utils import ConfigError, DomainError, PreconditionError, configure_logging, default_jobs

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED = 2

EVAL_PARAMS = ("k", "eps", "a", "a_coef", "t_cap", "r", "q", "tau1", "delta")


class _Parser(argparse.ArgumentParser):
    """ArgumentParser exiting with EXIT_ERROR on usage errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="polymer-bounds",
        description="Exponential martingale bounds, Monte-Carlo certification and directed-polymer experiments.")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging verbosity.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one experiment from a JSON config.")
    run.add_argument("--config", type=Path, required=True, help="Experiment config (JSON).")
    run.add_argument("--out", type=Path, default=Path("out"), help="Output directory.")
    run.add_argument("--seed", type=int, default=None, help="Master seed; overrides the config.")
    run.add_argument("--plots", action="store_true", help="Also write SVG figures.")
    run.add_argument("--z", type=float, default=None, help="Standard-error multiplier; overrides the config.")
    run.add_argument("--jobs", type=_positive_int, default=default_jobs(), help="Worker processes.")

    suite = sub.add_parser("suite", help="Run the pinned-seed reference battery.")
    suite.add_argument("--out", type=Path, default=Path("out/suite"), help="Output directory.")
    suite.add_argument("--seed", type=int, default=None, help=f"Master seed (default {SUITE_SEED}).")
    suite.add_argument("--plots", action="store_true", help="Also write SVG figures.")
    suite.add_argument("--z", type=float, default=3.0, help="Standard-error multiplier.")
    suite.add_argument("--jobs", type=_positive_int, default=default_jobs(), help="Worker processes.")
    suite.add_argument("--quick", action="store_true", help="Reduced sample sizes for a smoke run.")

    ev = sub.add_parser("eval", help="Evaluate one named bound.")
    ev.add_argument("--bound", required=True, choices=sorted(bounds.BOUND_EVALUATORS), help="Bound name.")
    ev.add_argument("--n", type=_positive_int, required=True, help="Path length.")
    ev.add_argument("--x", type=float, nargs="+", required=True, help="Abscissa value(s).")
    for name in EVAL_PARAMS:
        ev.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float, default=None,
                        help=f"Bound parameter '{name}'.")
    return parser


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    seed, source = resolve_seed(cfg, args.seed)
    logger.info("config %s", describe_config(cfg))
    report = run_experiment(cfg, seed, source, args.z, args.jobs)
    write_report(report, args.out, cfg.prefix)
    if args.plots:
        plot_report(report, args.out, cfg.prefix)
    print("\n".join(report.summary_lines()))
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_suite(args: argparse.Namespace) -> int:
    seed, source = resolve_seed(None, args.seed)
    outcome = reference_suite(args.out, seed, args.jobs, args.z, args.plots, args.quick)
    print(f"seed: {seed} ({source})")
    print("\n".join(format_matrix(outcome)))
    return outcome.exit_code


def cmd_eval(args: argparse.Namespace) -> int:
    params = {name: getattr(args, name) for name in EVAL_PARAMS if getattr(args, name) is not None}
    print("n,x,rate,bound")
    for x in args.x:
        rate, bound = bounds.evaluate_bound(args.bound, args.n, x, params)
        print(f"{args.n},{x:.10g},{rate:.10g},{bound:.10g}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "suite": cmd_suite, "eval": cmd_eval}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments and dispatch.

    Returns:
        int: 0 when every hard check passed, 2 when a verification failed,
        1 on config, domain or I/O errors.
    """
    load_dotenv()
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DomainError, PreconditionError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
