import argparse

from ltv_robust.commands.utils import (
    CommandResult,
    add_input_argument,
    load_plant,
    tolerances_from_args,
)
from ltv_robust.coprime import factorize
from ltv_robust.synthesis import synthesize
from ltv_robust.system_io import system_from_operator


def run_synthesize(args: argparse.Namespace) -> CommandResult:
    """Optimal parameter, robust controller and closed-loop certificate."""
    tolerances = tolerances_from_args(args)
    description, plant = load_plant(args.input, args.horizon)
    f = factorize(plant, tolerances.identity)
    Q, C, report = synthesize(f, schmidt_count=args.schmidt_pairs, tolerances=tolerances)
    results = {
        "system": description.name,
        "horizon": plant.horizon,
        "residuals": f.residuals,
        "synthesis": report,
        "optimal_parameter": system_from_operator(Q, "Q_o"),
        "controller": system_from_operator(C, "controller"),
    }
    options = {"horizon": args.horizon, "tol": args.tol, "schmidt_pairs": args.schmidt_pairs}
    return CommandResult("synthesize", results, [description], options)


def register_design_commands(subparsers: argparse._SubParsersAction, common: argparse.ArgumentParser):
    parser = subparsers.add_parser(
        "synthesize", parents=[common], help="Robustly stabilizing controller with certificates"
    )
    add_input_argument(parser)
    parser.add_argument(
        "--schmidt-pairs", type=int, default=3, help="Number of Schmidt pairs to verify (default: 3)"
    )
    parser.set_defaults(handler=run_synthesize)
