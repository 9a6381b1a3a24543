"""Command line front end: ``ltv_robust <command> [options]``."""

import argparse
import logging
import sys
import time

from ltv_robust.commands import register_commands
from ltv_robust.commands.utils import int_at_least
from ltv_robust.config import VERSION, configure_logging, load_environment_variables
from ltv_robust.errors import (
    DimensionMismatchError,
    NumericalCertificateError,
    SingularDiagonalBlockError,
    SystemValidationError,
)
from ltv_robust.system_io import RunReport, input_digest, write_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CERTIFICATE = 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", default=None, help="Write the JSON report here instead of stdout")
    common.add_argument(
        "--horizon",
        type=int_at_least(1),
        default=None,
        help="Override the horizon of fir and time-invariant state_space inputs",
    )
    common.add_argument(
        "--tol",
        type=float,
        default=None,
        help="Acceptance tolerance for residuals and certificates (default: 1e-8)",
    )
    common.add_argument("--seed", type=int, default=0, help="Seed for randomized commands (default: 0)")
    common.add_argument(
        "--timings", action="store_true", help="Include wall-clock timings in the report"
    )
    common.add_argument("--log-level", default=None, help="Logging level (default: LOG_LEVEL or WARNING)")

    parser = argparse.ArgumentParser(
        prog="ltv_robust",
        description="Robust stabilization toolkit for finite-horizon linear time-varying plants",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    register_commands(subparsers, common)
    return parser


def run(argv: list[str] | None = None) -> int:
    """Run one subcommand and return its exit code."""
    load_environment_variables()
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    started = time.perf_counter()
    try:
        result = args.handler(args)
    except (SystemValidationError, DimensionMismatchError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalCertificateError, SingularDiagonalBlockError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CERTIFICATE
    elapsed = time.perf_counter() - started

    report = RunReport(
        command=result.command,
        input_digest=input_digest(result.systems, {**result.options, "seed": result.seed}),
        seed=result.seed,
        results=result.results,
        timings={"total_seconds": elapsed} if args.timings else None,
    )
    write_report(report, args.output)
    if not result.passed:
        logger.error(f"{result.command} reported failed checks")
        return EXIT_CERTIFICATE
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
