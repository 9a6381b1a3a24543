import argparse
from dataclasses import dataclass, field, replace
from typing import Any, Callable

from ltv_robust.config import DEFAULT_TOLERANCES, Tolerances
from ltv_robust.core import LtvOperator
from ltv_robust.system_io import SystemDescription, operator_from_system, parse_system


@dataclass
class CommandResult:
    """What a subcommand hands back to the front end for the run report."""

    command: str
    results: dict[str, Any]
    systems: list[SystemDescription] = field(default_factory=list)
    options: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None
    passed: bool = True


def load_plant(path: str, horizon: int | None) -> tuple[SystemDescription, LtvOperator]:
    description = parse_system(path)
    return description, operator_from_system(description, horizon)


def tolerances_from_args(args: argparse.Namespace) -> Tolerances:
    if args.tol is None:
        return DEFAULT_TOLERANCES
    return replace(DEFAULT_TOLERANCES, certificate=args.tol, identity=args.tol)


def add_input_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True, help="System description file (JSON)")


def int_at_least(minimum: int) -> Callable[[str], int]:
    """argparse type accepting integers >= minimum."""

    def parse(text: str) -> int:
        try:
            value = int(text)
        except ValueError as e:
            raise argparse.ArgumentTypeError(f"invalid int value: {text!r}") from e
        if value < minimum:
            raise argparse.ArgumentTypeError(f"must be >= {minimum}, got {value}")
        return value

    return parse
