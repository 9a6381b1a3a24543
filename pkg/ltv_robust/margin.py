"""Stability-margin quantities of a coprime factorization.

``r_o`` is obtained twice: from the Hankel norm of the symbol ``R = M* U + N* V``
and from the norm of the anticausal map ``X -> (I - nest_project)([-N_hat*; M_hat*] X)``.
The per-n profile, the corona value and the row-problem radius complete the report.
"""

import logging
import math
from typing import Sequence

import numpy as np
from pydantic import BaseModel
from scipy.linalg import eigh, hankel, null_space
from scipy.signal import lfilter

from ltv_robust.config import DEFAULT_TOLERANCES, Tolerances
from ltv_robust.coprime import CoprimeFactorization
from ltv_robust.core import (
    LtvOperator,
    SignalSpace,
    flip,
    identity,
    operator_norm,
    stack_columns,
    stack_rows,
)
from ltv_robust.errors import NumericalCertificateError
from ltv_robust.nehari import (
    FlattenedMap,
    OperatorCoordinates,
    distance_to_causal,
    flatten_hankel,
    left_multiplication_map,
    nehari_extension,
)

logger = logging.getLogger(__name__)

BOUNDARY_WINDOW = 5


class MarginReport(BaseModel):
    hankel_norm_R: float
    hankel_norm_flattened: float
    nehari_residual: float
    r_o: float
    r_o_alt: float
    upsilon_norm: float
    cross_residual: float
    unitary_residual: float
    rotation_residual: float
    profile_indices: list[int]
    profile: list[float]
    profile_boundary: list[bool]
    profile_residual: float
    bracket_lower: float
    bracket_upper: float
    corona_value: float
    corona_left_inverse_bound: float
    ball_radius: float
    ball_radius_residual: float


def symbol_R(f: CoprimeFactorization) -> LtvOperator:
    """R = M* U + N* V."""
    return f.M.T @ f.U + f.N.T @ f.V


def source_space(f: CoprimeFactorization) -> SignalSpace:
    """Input space of the operators in the Hankel and proof-operator domains."""
    return f.plant.codomain


def causal_coordinates(space: SignalSpace, source: SignalSpace, after: int | None = None) -> OperatorCoordinates:
    return OperatorCoordinates(space, source, "causal", after)


def upsilon_map(f: CoprimeFactorization) -> FlattenedMap:
    """X -> (I - nest_project)([-N_hat*; M_hat*] X) on causal X."""
    column = stack_rows([-f.N_hat.T, f.M_hat.T])
    source = source_space(f)
    return left_multiplication_map(
        column,
        causal_coordinates(f.plant.codomain, source),
        OperatorCoordinates(column.codomain, source, "anticausal"),
    )


def xi_map(f: CoprimeFactorization) -> FlattenedMap:
    """A -> [U; V] A - [M; N] nest_project(R A) on causal A."""
    source = source_space(f)
    outputs = causal_coordinates(f.plant.codomain, source)
    inputs = causal_coordinates(f.plant.domain, source)
    pairs = causal_coordinates(f.graph.codomain, source)
    completion = left_multiplication_map(f.completion, outputs, pairs)
    symbol = left_multiplication_map(symbol_R(f), outputs, inputs)
    graph = left_multiplication_map(f.graph, inputs, pairs)
    return completion - graph @ symbol


def _check(name: str, residual: float, tol: float) -> None:
    if not residual <= tol:
        raise NumericalCertificateError(name, residual, tol)
    if residual > 0.1 * tol:
        logger.warning(f"Certificate '{name}' is close to its tolerance: {residual:.2e} / {tol:.1e}")


def _hankel_norms(R: LtvOperator) -> tuple[float, float]:
    return distance_to_causal(R), flatten_hankel(R).norm()


def unitary_residual(f: CoprimeFactorization, Q: LtvOperator) -> float:
    """| ||[U + MQ; V + NQ]|| - (1 + ||R + Q||^2)^{1/2} |."""
    column = f.completion + f.graph @ Q
    reduced = math.sqrt(1.0 + operator_norm(symbol_R(f) + Q) ** 2)
    return abs(operator_norm(column) - reduced)


def rotation_residual(f: CoprimeFactorization) -> float:
    """Distance of [[M*, N*], [-N_hat, M_hat]] from a unitary operator."""
    rotation = stack_rows([f.graph.T, f.left_graph])
    eye = identity(rotation.domain).matrix
    return max(
        float(np.linalg.norm(rotation.matrix.T @ rotation.matrix - eye, 2)),
        float(np.linalg.norm(rotation.matrix @ rotation.matrix.T - eye, 2)),
    )


def r_upper(f: CoprimeFactorization, tol: float = DEFAULT_TOLERANCES.certificate) -> tuple[float, float]:
    """Hankel norm of the symbol and r_o = (1 + ||H_R||^2)^{-1/2}.

    The corner formula is cross-checked against the flattened Hankel operator,
    and the norm reduction through the rotation is checked at the optimal parameter.

    Returns:
        Tuple (hankel norm, r_o).

    Raises:
        NumericalCertificateError: one of the cross-checks failed
    """
    R = symbol_R(f)
    corner, flattened = _hankel_norms(R)
    _check("nehari_equality", abs(corner - flattened), tol)
    _check("unitary_reduction", unitary_residual(f, nehari_extension(R)), tol)
    return corner, 1.0 / math.sqrt(1.0 + corner**2)


def r_upper_alt(f: CoprimeFactorization) -> tuple[float, float]:
    """Norm of the anticausal map and r_o_alt = (1 - ||Upsilon||^2)^{1/2}."""
    upsilon = upsilon_map(f).norm()
    if upsilon >= 1.0:
        raise NumericalCertificateError("upsilon_norm", upsilon, 1.0, "norm must stay below 1")
    return upsilon, math.sqrt(1.0 - upsilon**2)


def margin_profile(f: CoprimeFactorization, xi: FlattenedMap | None = None) -> list[float]:
    """Norm of the restriction of Xi to (I - P_n) times causal inputs, n = -1 .. T-2."""
    xi = xi or xi_map(f)
    return [
        xi.restrict(xi.domain_basis.restricted(after=n)).norm()
        for n in range(-1, f.plant.horizon - 1)
    ]


def corona_values(M: LtvOperator, N: LtvOperator, rank_tol: float = DEFAULT_TOLERANCES.rank) -> list[float]:
    """sup over f of ||P_n f|| / ||[P_n M f; P_n N f]|| for every n = 0 .. T-1."""
    values = []
    for n in range(M.horizon):
        rows = M.codomain.time_index <= n
        cols = M.domain.time_index <= n
        M_n = M.matrix[np.ix_(rows, cols)]
        N_n = N.matrix[np.ix_(N.codomain.time_index <= n, cols)]
        stacked = np.vstack([M_n, N_n])
        if null_space(stacked, rcond=rank_tol).shape[1] > 0:
            logger.info(f"Truncated column has a kernel at n={n}; no bounded left inverse")
            values.append(math.inf)
            continue
        gram = stacked.T @ stacked
        eigenvalues = eigh(np.eye(gram.shape[0]), gram, eigvals_only=True)
        values.append(math.sqrt(float(eigenvalues[-1])))
    return values


def corona_criterion(M: LtvOperator, N: LtvOperator) -> float:
    """Supremum over truncations of the left-inverse gain of [M; N]; infinite when some truncation has a kernel."""
    return max(corona_values(M, N))


def left_inverse_norm(f: CoprimeFactorization) -> float:
    """Norm of the explicit causal left inverse (V_hat, -U_hat) of [M; N]."""
    return operator_norm(stack_columns([f.V_hat, -f.U_hat]))


def _row_symbol(f: CoprimeFactorization) -> LtvOperator:
    return f.V_hat @ f.N_hat.T + f.U_hat @ f.M_hat.T


def ball_radius(f: CoprimeFactorization) -> float:
    """Reciprocal of inf over causal Q of ||[V_hat + Q N_hat, -(U_hat + Q M_hat)]||.

    The row problem is rotated to ``[I, R_row + Q]`` and solved as the column
    problem of the flipped symbol.
    """
    distance = distance_to_causal(flip(_row_symbol(f)))
    return 1.0 / math.sqrt(1.0 + distance**2)


def ball_radius_residual(f: CoprimeFactorization) -> float:
    """Mismatch between the row optimum and the row norm reached by the flipped Nehari solution."""
    row_symbol = _row_symbol(f)
    Q = flip(nehari_extension(flip(row_symbol)))
    row = stack_columns([f.V_hat + Q @ f.N_hat, -(f.U_hat + Q @ f.M_hat)])
    optimum = 1.0 / ball_radius(f)
    direct = math.sqrt(1.0 + distance_to_causal(row_symbol) ** 2)
    return max(abs(operator_norm(row) - optimum), abs(direct - optimum))


def margin_report(f: CoprimeFactorization, tolerances: Tolerances = DEFAULT_TOLERANCES) -> MarginReport:
    """Assemble every margin quantity and its cross-checks.

    Raises:
        NumericalCertificateError: any certificate exceeded ``tolerances.certificate``
    """
    tol = tolerances.certificate
    R = symbol_R(f)
    corner, flattened = _hankel_norms(R)
    r_o = 1.0 / math.sqrt(1.0 + corner**2)
    upsilon, r_o_alt = r_upper_alt(f)
    unitary = unitary_residual(f, nehari_extension(R))
    rotation = rotation_residual(f)

    xi = xi_map(f)
    profile = margin_profile(f, xi)
    indices = list(range(-1, f.plant.horizon - 1))
    horizon = f.plant.horizon
    profile_residual = abs(profile[0] - 1.0 / r_o)

    corona = corona_criterion(f.M, f.N)
    radius = ball_radius(f)

    report = MarginReport(
        hankel_norm_R=corner,
        hankel_norm_flattened=flattened,
        nehari_residual=abs(corner - flattened),
        r_o=r_o,
        r_o_alt=r_o_alt,
        upsilon_norm=upsilon,
        cross_residual=abs(r_o - r_o_alt),
        unitary_residual=unitary,
        rotation_residual=rotation,
        profile_indices=indices,
        profile=profile,
        profile_boundary=[n > horizon - BOUNDARY_WINDOW for n in indices],
        profile_residual=profile_residual,
        bracket_lower=r_o,
        bracket_upper=1.0 / min(profile),
        corona_value=corona,
        corona_left_inverse_bound=left_inverse_norm(f),
        ball_radius=radius,
        ball_radius_residual=ball_radius_residual(f),
    )
    for name in (
        "nehari_residual",
        "cross_residual",
        "unitary_residual",
        "rotation_residual",
        "profile_residual",
        "ball_radius_residual",
    ):
        _check(name, getattr(report, name), tol)
    logger.info(f"Margin: r_o={r_o:.12g}, r_o_alt={r_o_alt:.12g}, ball radius={radius:.12g}")
    return report


def _spectral_factor(h: np.ndarray, unit_circle_tol: float) -> np.ndarray:
    """Minimum-phase phi with phi(z) phi(1/z) = 1 + h(z) h(1/z)."""
    m = h.size - 1
    laurent = np.array([np.dot(h[: h.size - k], h[k:]) for k in range(m + 1)])
    laurent[0] += 1.0
    coefficients = np.concatenate((laurent[::-1], laurent[1:]))
    roots = np.roots(coefficients) if m > 0 else np.zeros(0)
    if np.any(np.abs(np.abs(roots) - 1.0) < unit_circle_tol):
        raise NumericalCertificateError(
            "spectral_factorization",
            float(np.min(np.abs(np.abs(roots) - 1.0))),
            unit_circle_tol,
            "root on the unit circle",
        )
    monic = np.real(np.poly(roots[np.abs(roots) < 1.0]))
    gain = math.sqrt(laurent[0] / float(np.dot(monic, monic)))
    return gain * monic


def lti_margin_oracle(h: Sequence[float], truncation: int = 200, unit_circle_tol: float = 1e-8) -> float:
    """Maximal stability margin of a scalar FIR plant from its normalized left factors.

    Args:
        h: impulse response h_0 .. h_m
        truncation: size K of the Hankel matrices (K >> m)
        unit_circle_tol: roots closer than this to the unit circle reject the plant

    Returns:
        (1 - ||[H_N, H_M]||^2)^{1/2} with H_N, H_M the Hankel matrices of the
        normalized left factors 1/phi and h/phi.
    """
    h = np.atleast_1d(np.asarray(h, dtype=float))
    phi = _spectral_factor(h, unit_circle_tol)
    impulse = np.zeros(2 * truncation)
    impulse[0] = 1.0
    m_tilde = lfilter([1.0], phi, impulse)
    n_tilde = lfilter(h, phi, impulse)

    def hankel_matrix(g: np.ndarray) -> np.ndarray:
        return hankel(g[1 : truncation + 1], g[truncation : 2 * truncation])

    combined = np.hstack([hankel_matrix(n_tilde), hankel_matrix(m_tilde)])
    norm = float(np.linalg.norm(combined, 2))
    if norm >= 1.0:
        raise NumericalCertificateError("lti_hankel_norm", norm, 1.0, "norm must stay below 1")
    return math.sqrt(1.0 - norm**2)
