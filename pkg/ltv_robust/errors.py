"""Exception hierarchy shared by the compute modules and the command line front end."""


class LtvError(Exception):
    """Base class for all errors raised by ltv_robust."""


class DimensionMismatchError(LtvError, ValueError):
    """Operands are not conformable or a system description is inconsistent."""


class CausalityError(LtvError, ValueError):
    """A causal (block lower-triangular) operand was required."""


class SingularDiagonalBlockError(LtvError):
    """A diagonal block needed for causal inversion is (numerically) singular."""

    def __init__(
        self,
        block_index: int,
        smallest_singular_value: float,
        largest_singular_value: float = float("nan"),
    ):
        self.block_index = block_index
        self.smallest_singular_value = smallest_singular_value
        self.largest_singular_value = largest_singular_value
        super().__init__(
            f"Diagonal block {block_index} is singular: "
            f"smallest singular value {smallest_singular_value:.3e}, "
            f"largest {largest_singular_value:.3e}",
        )


class NumericalCertificateError(LtvError):
    """A verified identity exceeded its tolerance."""

    def __init__(self, name: str, residual: float, tolerance: float, detail: str = ""):
        self.name = name
        self.residual = residual
        self.tolerance = tolerance
        message = f"Certificate '{name}' failed: residual {residual:.3e} > tolerance {tolerance:.1e}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class ControllerSynthesisError(NumericalCertificateError):
    """The robust controller could not be formed from the optimal parameter."""


class SystemValidationError(LtvError, ValueError):
    """A system description file or a command option failed to validate."""
