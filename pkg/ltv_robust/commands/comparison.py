import argparse
import logging

from ltv_robust.commands.utils import CommandResult, load_plant, tolerances_from_args
from ltv_robust.coprime import factorize
from ltv_robust.gap import tv_gap

logger = logging.getLogger(__name__)


def run_gap(args: argparse.Namespace) -> CommandResult:
    """Time-varying gap between two plants on the same signal spaces.

    Fails when the per-n identity gap = max(directed gaps) misses the certificate tolerance.
    """
    tolerances = tolerances_from_args(args)
    description_a, plant_a = load_plant(args.plant_a, args.horizon)
    description_b, plant_b = load_plant(args.plant_b, args.horizon)
    report = tv_gap(factorize(plant_a, tolerances.identity), factorize(plant_b, tolerances.identity))
    passed = report.max_identity_residual <= tolerances.certificate
    if not passed:
        logger.error(
            f"Gap identity residual {report.max_identity_residual:.2e} exceeds {tolerances.certificate:.1e}"
        )
    results = {
        "systems": [description_a.name, description_b.name],
        "horizon": plant_a.horizon,
        "gap": report,
    }
    options = {"horizon": args.horizon, "tol": args.tol}
    return CommandResult("gap", results, [description_a, description_b], options, passed=passed)


def register_comparison_commands(subparsers: argparse._SubParsersAction, common: argparse.ArgumentParser):
    parser = subparsers.add_parser("gap", parents=[common], help="Time-varying gap metric between two plants")
    parser.add_argument("--plant-a", required=True, help="First system description file")
    parser.add_argument("--plant-b", required=True, help="Second system description file")
    parser.set_defaults(handler=run_gap)
