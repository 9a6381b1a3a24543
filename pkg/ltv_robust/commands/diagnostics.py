import argparse
import logging

from ltv_robust.commands.utils import CommandResult, int_at_least, tolerances_from_args
from ltv_robust.selftest import run_selftest

logger = logging.getLogger(__name__)


def run_selftest_command(args: argparse.Namespace) -> CommandResult:
    report = run_selftest(
        seed=args.seed,
        count=args.count,
        max_horizon=args.max_horizon,
        tolerances=tolerances_from_args(args),
        progress=logger.debug,
    )
    options = {"count": args.count, "max_horizon": args.max_horizon, "tol": args.tol}
    return CommandResult("selftest", {"selftest": report}, [], options, seed=args.seed, passed=report.passed)


def register_diagnostic_commands(subparsers: argparse._SubParsersAction, common: argparse.ArgumentParser):
    parser = subparsers.add_parser("selftest", parents=[common], help="Randomized property suite")
    parser.add_argument(
        "--count", type=int_at_least(1), default=20, help="Number of random plants (default: 20)"
    )
    parser.add_argument(
        "--max-horizon", type=int_at_least(2), default=6, help="Largest random horizon (default: 6)"
    )
    parser.set_defaults(handler=run_selftest_command)
