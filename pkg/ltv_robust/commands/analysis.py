"""Single-plant commands: factorize, margin and corona."""

import argparse

from ltv_robust.commands.utils import (
    CommandResult,
    add_input_argument,
    load_plant,
    tolerances_from_args,
)
from ltv_robust.coprime import factorize
from ltv_robust.margin import corona_values, left_inverse_norm, margin_report
from ltv_robust.system_io import system_from_operator


def run_factorize(args: argparse.Namespace) -> CommandResult:
    """Normalized coprime factors, the zero-controller completion and their residuals."""
    tolerances = tolerances_from_args(args)
    description, plant = load_plant(args.input, args.horizon)
    f = factorize(plant, tolerances.identity)
    results = {
        "system": description.name,
        "horizon": plant.horizon,
        "residuals": f.residuals,
        "factors": {name: system_from_operator(op, name) for name, op in f.operators().items()},
    }
    options = {"horizon": args.horizon, "tol": args.tol}
    return CommandResult("factorize", results, [description], options)


def run_margin(args: argparse.Namespace) -> CommandResult:
    tolerances = tolerances_from_args(args)
    description, plant = load_plant(args.input, args.horizon)
    f = factorize(plant, tolerances.identity)
    results = {
        "system": description.name,
        "horizon": plant.horizon,
        "residuals": f.residuals,
        "margin": margin_report(f, tolerances),
    }
    options = {"horizon": args.horizon, "tol": args.tol}
    return CommandResult("margin", results, [description], options)


def run_corona(args: argparse.Namespace) -> CommandResult:
    tolerances = tolerances_from_args(args)
    description, plant = load_plant(args.input, args.horizon)
    f = factorize(plant, tolerances.identity)
    values = corona_values(f.M, f.N)
    results = {
        "system": description.name,
        "horizon": plant.horizon,
        "corona_value": max(values),
        "per_n": values,
        "left_inverse_bound": left_inverse_norm(f),
    }
    options = {"horizon": args.horizon, "tol": args.tol}
    return CommandResult("corona", results, [description], options)


def register_analysis_commands(subparsers: argparse._SubParsersAction, common: argparse.ArgumentParser):
    factorize_parser = subparsers.add_parser(
        "factorize", parents=[common], help="Coprime factorization with verified residuals"
    )
    add_input_argument(factorize_parser)
    factorize_parser.set_defaults(handler=run_factorize)

    margin_parser = subparsers.add_parser(
        "margin", parents=[common], help="Stability-margin report (r_o, profile, corona, radius)"
    )
    add_input_argument(margin_parser)
    margin_parser.set_defaults(handler=run_margin)

    corona_parser = subparsers.add_parser(
        "corona", parents=[common], help="Left-inverse (corona) criterion of the right factors"
    )
    add_input_argument(corona_parser)
    corona_parser.set_defaults(handler=run_corona)
