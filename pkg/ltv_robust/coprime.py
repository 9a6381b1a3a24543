"""Normalized coprime factorizations and the doubly coprime completion.

For a causal plant ``P`` (input space ``m``, output space ``p``) the right factors
satisfy ``P = N M^{-1}`` with ``[M; N]`` an isometry and the left factors satisfy
``P = M_hat^{-1} N_hat`` with ``(M_hat, N_hat)`` a co-isometry. Together with the
completion ``(U, V, U_hat, V_hat)`` they make

    [[V_hat, -U_hat], [-N_hat, M_hat]] @ [[M, U], [N, V]] = I

in both multiplication orders.
"""

import logging
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from pydantic import BaseModel
from scipy.linalg import cholesky, polar

from ltv_robust.config import DEFAULT_TOLERANCES
from ltv_robust.core import (
    LtvOperator,
    corner_norms,
    identity,
    is_causal,
    operator_norm,
    solve_causal_inverse,
    stack_columns,
    stack_rows,
    zeros,
)
from ltv_robust.errors import (
    CausalityError,
    DimensionMismatchError,
    NumericalCertificateError,
    SingularDiagonalBlockError,
)

logger = logging.getLogger(__name__)


class CoprimeResiduals(BaseModel):
    rcf_isometry: float
    lcf_coisometry: float
    doubly_coprime_left: float
    doubly_coprime_right: float
    quotient_right: float
    quotient_left: float
    causality: float

    @property
    def max_residual(self) -> float:
        return max(self.model_dump().values())

    def accepted(self, tol: float = DEFAULT_TOLERANCES.identity) -> bool:
        return self.max_residual < tol


@dataclass(frozen=True, eq=False)
class CoprimeFactorization:
    plant: LtvOperator
    M: LtvOperator
    N: LtvOperator
    M_hat: LtvOperator
    N_hat: LtvOperator
    U: LtvOperator
    V: LtvOperator
    U_hat: LtvOperator
    V_hat: LtvOperator
    residuals: CoprimeResiduals | None = None

    @cached_property
    def graph(self) -> LtvOperator:
        """The isometric column [M; N]."""
        return stack_rows([self.M, self.N])

    @cached_property
    def left_graph(self) -> LtvOperator:
        """The co-isometric row (-N_hat, M_hat)."""
        return stack_columns([-self.N_hat, self.M_hat])

    @cached_property
    def completion(self) -> LtvOperator:
        """The column [U; V]."""
        return stack_rows([self.U, self.V])

    @property
    def bezout_pair(self) -> tuple[LtvOperator, LtvOperator]:
        """(X, Y) with X N + Y M = I."""
        return -self.U_hat, self.V_hat

    @property
    def left_bezout_pair(self) -> tuple[LtvOperator, LtvOperator]:
        """(X_hat, Y_hat) with N_hat X_hat + M_hat Y_hat = I."""
        return -self.U, self.V

    def operators(self) -> dict[str, LtvOperator]:
        return {
            "M": self.M,
            "N": self.N,
            "M_hat": self.M_hat,
            "N_hat": self.N_hat,
            "U": self.U,
            "V": self.V,
            "U_hat": self.U_hat,
            "V_hat": self.V_hat,
        }


def _require_causal(P: LtvOperator) -> None:
    if not is_causal(P):
        raise CausalityError(
            f"Plant must be causal; largest corner norm is {corner_norms(P).max():.3e}",
        )


def _positive_diagonal_rows(A: np.ndarray, space) -> np.ndarray:
    """Rotate each block row so the diagonal block becomes symmetric positive definite."""
    A = A.copy()
    for k in range(space.horizon):
        rows = space.block_slice(k)
        rotation, _ = polar(A[rows, rows])
        A[rows, :] = rotation.T @ A[rows, :]
    return A


def _positive_diagonal_columns(A: np.ndarray, space) -> np.ndarray:
    A = A.copy()
    for k in range(space.horizon):
        cols = space.block_slice(k)
        rotation, _ = polar(A[cols, cols], side="left")
        A[:, cols] = A[:, cols] @ rotation.T
    return A


def normalized_rcf(P: LtvOperator) -> tuple[LtvOperator, LtvOperator]:
    """Normalized right coprime factors of a causal plant.

    Factors ``I + P* P = A* A`` with ``A`` block lower-triangular (Cholesky of the
    order-reversed matrix) and returns ``M = A^{-1}``, ``N = P M``.

    Args:
        P: causal plant

    Returns:
        Tuple (M, N).
    """
    _require_causal(P)
    space = P.domain
    W = np.eye(space.total) + P.matrix.T @ P.matrix
    reversed_factor = cholesky(W[::-1, ::-1], lower=True)
    A = _positive_diagonal_rows(reversed_factor.T[::-1, ::-1], space)
    M = solve_causal_inverse(LtvOperator(space, space, A))
    N = P @ M
    logger.debug(f"Right factors computed over T={P.horizon}, input dims {space.dims}")
    return M, N


def normalized_lcf(P: LtvOperator) -> tuple[LtvOperator, LtvOperator]:
    """Normalized left coprime factors: ``I + P P* = A A*``, ``M_hat = A^{-1}``, ``N_hat = M_hat P``."""
    _require_causal(P)
    space = P.codomain
    W = np.eye(space.total) + P.matrix @ P.matrix.T
    A = _positive_diagonal_columns(cholesky(W, lower=True), space)
    M_hat = solve_causal_inverse(LtvOperator(space, space, A))
    N_hat = M_hat @ P
    return M_hat, N_hat


def bezout_completion(
    M: LtvOperator,
    N: LtvOperator,
    M_hat: LtvOperator,
    N_hat: LtvOperator,
) -> tuple[LtvOperator, LtvOperator, LtvOperator, LtvOperator]:
    """Zero-controller completion U = U_hat = 0, V = M_hat^{-1}, V_hat = M^{-1}.

    Returns:
        Tuple (U, V, U_hat, V_hat).
    """
    if M.domain != N.domain or M_hat.codomain != N_hat.codomain:
        raise DimensionMismatchError("Factors are not conformable")
    input_space, output_space = M.domain, N.codomain
    U = zeros(input_space, output_space)
    U_hat = zeros(input_space, output_space)
    V = solve_causal_inverse(M_hat)
    V_hat = solve_causal_inverse(M)
    return U, V, U_hat, V_hat


def _identity_residual(X: LtvOperator) -> float:
    return operator_norm(X - identity(X.domain))


def verify_doubly_coprime(f: CoprimeFactorization) -> CoprimeResiduals:
    """Evaluate every factorization identity.

    A factorization is accepted when the largest residual is below the identity
    tolerance.
    """
    left = stack_rows([stack_columns([f.V_hat, -f.U_hat]), stack_columns([-f.N_hat, f.M_hat])])
    right = stack_rows([stack_columns([f.M, f.U]), stack_columns([f.N, f.V])])
    try:
        quotient_right = operator_norm(f.N @ solve_causal_inverse(f.M) - f.plant)
    except SingularDiagonalBlockError as e:
        logger.warning(f"M is not causally invertible: {e}")
        quotient_right = float("inf")
    try:
        quotient_left = operator_norm(solve_causal_inverse(f.M_hat) @ f.N_hat - f.plant)
    except SingularDiagonalBlockError as e:
        logger.warning(f"M_hat is not causally invertible: {e}")
        quotient_left = float("inf")
    causality = max(
        (float(corner_norms(op).max(initial=0.0)) for op in f.operators().values()),
    )
    return CoprimeResiduals(
        rcf_isometry=_identity_residual(f.graph.T @ f.graph),
        lcf_coisometry=_identity_residual(f.left_graph @ f.left_graph.T),
        doubly_coprime_left=_identity_residual(left @ right),
        doubly_coprime_right=_identity_residual(right @ left),
        quotient_right=quotient_right,
        quotient_left=quotient_left,
        causality=causality,
    )


def factorize(
    P: LtvOperator,
    tol: float = DEFAULT_TOLERANCES.identity,
) -> CoprimeFactorization:
    """Run the full coprime pipeline on a causal plant and verify it.

    Raises:
        NumericalCertificateError: some residual reached ``tol``
    """
    M, N = normalized_rcf(P)
    M_hat, N_hat = normalized_lcf(P)
    U, V, U_hat, V_hat = bezout_completion(M, N, M_hat, N_hat)
    f = CoprimeFactorization(P, M, N, M_hat, N_hat, U, V, U_hat, V_hat)
    residuals = verify_doubly_coprime(f)
    if not residuals.accepted(tol):
        raise NumericalCertificateError("doubly_coprime", residuals.max_residual, tol)
    logger.info(f"Factorization accepted, largest residual {residuals.max_residual:.2e}")
    return replace(f, residuals=residuals)


def reparameterize(f: CoprimeFactorization, Q: LtvOperator) -> CoprimeFactorization:
    """Shift the completion by a causal parameter Q (output space to input space).

    ``U + MQ, V + NQ, U_hat + Q M_hat, V_hat + Q N_hat`` is again a doubly coprime
    completion of the same normalized factors.
    """
    if not is_causal(Q):
        raise CausalityError("The completion parameter must be causal")
    shifted = replace(
        f,
        U=f.U + f.M @ Q,
        V=f.V + f.N @ Q,
        U_hat=f.U_hat + Q @ f.M_hat,
        V_hat=f.V_hat + Q @ f.N_hat,
        residuals=None,
    )
    return replace(shifted, residuals=verify_doubly_coprime(shifted))
