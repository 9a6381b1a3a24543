"""The time-varying gap metric between two plants.

The graph of a plant with normalized right factors (M, N) is the range of the
isometric column [M; N]. Truncating its input to times after ``n`` gives the
subspace whose orthogonal projection is compared between plants.
"""

import logging
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel
from scipy.linalg import orth

from ltv_robust.config import DEFAULT_TOLERANCES
from ltv_robust.coprime import CoprimeFactorization, factorize
from ltv_robust.core import (
    LtvOperator,
    NestIndex,
    random_causal,
    solve_causal_inverse,
    split_rows,
    stack_rows,
    truncation,
    zeros,
)
from ltv_robust.errors import (
    DimensionMismatchError,
    NumericalCertificateError,
    SingularDiagonalBlockError,
)

logger = logging.getLogger(__name__)


class GapReport(BaseModel):
    nest_indices: list[int]
    per_n_directed_12: list[float]
    per_n_directed_21: list[float]
    per_n_gap: list[float]
    directed_12: float
    directed_21: float
    alpha: float
    max_identity_residual: float


def graph_projection(M: LtvOperator, N: LtvOperator, n: int | NestIndex) -> LtvOperator:
    """Orthogonal projection onto the range of [M; N](I - P_n).

    Args:
        M: right factor, input space to input space
        N: right factor, input space to output space
        n: nest index; -1 gives the whole graph, T-1 the zero projection

    Returns:
        Projection on the stacked (input, output) space.
    """
    graph = stack_rows([M, N])
    nest = n if isinstance(n, NestIndex) else NestIndex(n)
    kept = ~nest.mask(graph.domain)
    columns = graph.matrix[:, kept]
    if columns.shape[1] == 0:
        return zeros(graph.codomain, graph.codomain)
    basis = orth(columns, rcond=DEFAULT_TOLERANCES.rank)
    return LtvOperator(graph.codomain, graph.codomain, basis @ basis.T)


def _check_same_spaces(f1: CoprimeFactorization, f2: CoprimeFactorization) -> None:
    if f1.plant.codomain != f2.plant.codomain or f1.plant.domain != f2.plant.domain:
        raise DimensionMismatchError(
            f"Plants act on different signal spaces: {f1.plant!r} vs {f2.plant!r}",
        )


def _directed(projection_1: LtvOperator, projection_2: LtvOperator, complement: LtvOperator) -> float:
    return float(np.linalg.norm((complement.matrix - projection_2.matrix) @ projection_1.matrix, 2))


def directed_gap_n(f1: CoprimeFactorization, f2: CoprimeFactorization, n: int) -> float:
    """||(diag(I - P_n, I - P_n) - Pi_2n) Pi_1n|| for the two graphs."""
    _check_same_spaces(f1, f2)
    projection_1 = graph_projection(f1.M, f1.N, n)
    projection_2 = graph_projection(f2.M, f2.N, n)
    complement = truncation(projection_1.domain, n, complement=True)
    return _directed(projection_1, projection_2, complement)


def tv_gap(f1: CoprimeFactorization, f2: CoprimeFactorization) -> GapReport:
    """Directed gaps at every nest index -1 .. T-1, their suprema and the symmetric gap."""
    _check_same_spaces(f1, f2)
    indices = list(range(-1, f1.plant.horizon))
    forward, backward, symmetric = [], [], []
    for n in indices:
        projection_1 = graph_projection(f1.M, f1.N, n)
        projection_2 = graph_projection(f2.M, f2.N, n)
        complement = truncation(projection_1.domain, n, complement=True)
        forward.append(_directed(projection_1, projection_2, complement))
        backward.append(_directed(projection_2, projection_1, complement))
        symmetric.append(float(np.linalg.norm(projection_1.matrix - projection_2.matrix, 2)))
    residual = max(abs(d - max(a, b)) for d, a, b in zip(symmetric, forward, backward))
    directed_12, directed_21 = max(forward), max(backward)
    logger.debug(f"Gap: directed {directed_12:.6g} / {directed_21:.6g}, identity residual {residual:.2e}")
    return GapReport(
        nest_indices=indices,
        per_n_directed_12=forward,
        per_n_directed_21=backward,
        per_n_gap=symmetric,
        directed_12=directed_12,
        directed_21=directed_21,
        alpha=max(directed_12, directed_21),
        max_identity_residual=residual,
    )


def gap_between_plants(P1: LtvOperator, P2: LtvOperator) -> GapReport:
    return tv_gap(factorize(P1), factorize(P2))


@dataclass(frozen=True, eq=False)
class BallSample:
    plant: LtvOperator
    perturbation_norm: float
    alpha: float


def coprime_perturbation(
    f: CoprimeFactorization,
    delta_M: LtvOperator,
    delta_N: LtvOperator,
    rtol: float = DEFAULT_TOLERANCES.singular_block,
) -> LtvOperator:
    """The perturbed plant (N + delta_N)(M + delta_M)^{-1}."""
    return (f.N + delta_N) @ solve_causal_inverse(f.M + delta_M, rtol=rtol)


def sample_coprime_ball(
    P: LtvOperator,
    r: float,
    count: int,
    seed: int,
    max_attempts: int | None = None,
) -> list[BallSample]:
    """Draw plants from the coprime-factor ball of radius r around P and measure their gap.

    Perturbations are random causal [delta_M; delta_N] rescaled to a norm drawn
    uniformly in [0, r). Draws leaving M + delta_M with a near-singular diagonal
    block are rejected and redrawn.

    Args:
        P: nominal causal plant
        r: ball radius, > 0
        count: number of accepted samples
        seed: seed of the random generator

    Returns:
        Accepted samples with the gap to the nominal plant.
    """
    if r <= 0:
        raise ValueError(f"Ball radius must be positive, got {r}")
    f = factorize(P)
    rng = np.random.default_rng(seed)
    graph_space = f.graph.codomain
    samples: list[BallSample] = []
    attempts = 0
    limit = max_attempts or 100 * count
    while len(samples) < count:
        attempts += 1
        if attempts > limit:
            raise NumericalCertificateError(
                "coprime_ball_sampling", float(attempts), float(limit), "too many rejected draws"
            )
        delta = random_causal(rng, graph_space, f.M.domain)
        norm = float(np.linalg.norm(delta.matrix, 2))
        if norm == 0.0:
            continue
        delta = delta * (r * rng.uniform(0.0, 1.0) / norm)
        delta_M, delta_N = split_rows(delta, [f.M.codomain, f.N.codomain])
        try:
            P1 = coprime_perturbation(f, delta_M, delta_N)
        except SingularDiagonalBlockError as e:
            logger.debug(f"Rejected coprime-ball draw: {e}")
            continue
        alpha = tv_gap(f, factorize(P1)).alpha
        samples.append(
            BallSample(plant=P1, perturbation_norm=float(np.linalg.norm(delta.matrix, 2)), alpha=alpha),
        )
    logger.info(f"Drew {count} coprime-ball samples in {attempts} attempts")
    return samples
