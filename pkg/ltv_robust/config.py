import logging
import os
from dataclasses import dataclass

from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler

VERSION = "0.1.1"
REPORT_SCHEMA_VERSION = 1
DEFAULT_LOG_LEVEL = "WARNING"


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds used across the toolkit.

    Attributes:
        structural: block-pattern checks such as causality and projection laws
        identity: acceptance threshold for factorization residuals
        rank: relative singular value cutoff for range bases and kernels
        certificate: threshold for proof-operator and margin certificates
        schmidt: threshold for the optimal-parameter subspace identity
        singular_block: relative cutoff for near-singular diagonal blocks
        controller_condition: largest admissible condition number of a diagonal block
            of V + NQ when forming the controller
        s_basis_threshold: eigenvalue cutoff separating the unit cluster of a projection
        degenerate_lambda: Schmidt values above 1 - degenerate_lambda are rejected
    """

    structural: float = 1e-10
    identity: float = 1e-8
    rank: float = 1e-12
    certificate: float = 1e-8
    schmidt: float = 1e-7
    singular_block: float = 1e-8
    controller_condition: float = 1e10
    s_basis_threshold: float = 0.5
    degenerate_lambda: float = 1e-12


DEFAULT_TOLERANCES = Tolerances()


def load_environment_variables() -> None:
    """
    Load environment variables from .env file.
    Only logging verbosity is read from the environment; numerical behaviour never is.
    """
    load_dotenv(override=False)


def resolve_log_level(level: str | None = None) -> int:
    name = (level or os.getenv("LOG_LEVEL") or DEFAULT_LOG_LEVEL).upper()
    return getattr(logging, name, logging.WARNING)


def configure_logging(level: str | int | None = None) -> None:
    """Install a rich handler writing to stderr on the root logger.

    Args:
        level: level name or number; falls back to LOG_LEVEL and then WARNING
    """
    log_level = level if isinstance(level, int) else resolve_log_level(level)
    handler = RichHandler(console=Console(stderr=True), rich_tracebacks=True, show_path=False)
    root = logging.getLogger()
    for existing in list(root.handlers):
        if isinstance(existing, RichHandler):
            root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(log_level)
