import argparse


def register_commands(subparsers: argparse._SubParsersAction, common: argparse.ArgumentParser):
    """Register all subcommands with the command line parser."""
    # Import registration functions from submodules
    from ltv_robust.commands.analysis import register_analysis_commands
    from ltv_robust.commands.comparison import register_comparison_commands
    from ltv_robust.commands.design import register_design_commands
    from ltv_robust.commands.diagnostics import register_diagnostic_commands

    # Register commands
    register_analysis_commands(subparsers, common)
    register_comparison_commands(subparsers, common)
    register_design_commands(subparsers, common)
    register_diagnostic_commands(subparsers, common)
