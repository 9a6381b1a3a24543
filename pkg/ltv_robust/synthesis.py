"""Proof operators, Schmidt pairs, the optimal parameter and the robust controller.

All three proof operators act on causal Hilbert-Schmidt operators with a common
source space (the plant output space):

* Xi    A -> [U; V] A - [M; N] nest_project(R A)
* Gamma W -> (-N_hat, M_hat) W on S, the orthogonal complement of [M; N] times
  causal operators inside causal pairs
* Upsilon X -> (I - nest_project)([-N_hat*; M_hat*] X)
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from pydantic import BaseModel
from scipy.linalg import eigh

from ltv_robust.config import DEFAULT_TOLERANCES, Tolerances
from ltv_robust.coprime import CoprimeFactorization
from ltv_robust.core import (
    LtvOperator,
    anticausal_part,
    hs_norm,
    identity,
    is_causal,
    nest_project,
    operator_norm,
    solve_causal_inverse,
    split_rows,
    stack_columns,
    stack_rows,
)
from ltv_robust.errors import (
    ControllerSynthesisError,
    NumericalCertificateError,
    SingularDiagonalBlockError,
)
from ltv_robust.margin import (
    causal_coordinates,
    symbol_R,
    upsilon_map,
    xi_map,
)
from ltv_robust.nehari import FlattenedMap, OperatorCoordinates, left_multiplication_map, parrott_sweep

logger = logging.getLogger(__name__)

TOP_CLUSTER_RTOL = 1e-12


class ProofResiduals(BaseModel):
    projection_idempotent: float
    projection_symmetric: float
    xi_range: float
    gamma_xi: float
    xi_gamma: float
    energy_split: float
    norm_triangle: float
    xi_tau: float

    @property
    def max_residual(self) -> float:
        return max(self.model_dump().values())


@dataclass(frozen=True, eq=False)
class ProofOperators:
    """Flattened Xi, Gamma and Upsilon in shared orthonormal coordinates.

    ``gamma`` is the left multiplication by (-N_hat, M_hat) on all causal pairs.
    ``s_basis`` is an isometry from the causal output coordinates onto S, built one
    time step at a time, and ``gamma_on_s`` is Gamma read off through it.
    """

    factorization: CoprimeFactorization
    xi: FlattenedMap
    gamma: FlattenedMap
    upsilon: FlattenedMap
    projection: FlattenedMap
    s_basis: FlattenedMap
    residuals: ProofResiduals

    @property
    def outputs(self) -> OperatorCoordinates:
        return self.xi.domain_basis

    @property
    def pairs(self) -> OperatorCoordinates:
        return self.xi.codomain_basis

    @cached_property
    def gamma_on_s(self) -> FlattenedMap:
        return self.gamma @ self.s_basis

    def tau(self) -> float:
        """Minimal gain of Gamma on S."""
        return self.gamma_on_s.min_gain()


def _pair_projection(f: CoprimeFactorization, pairs: OperatorCoordinates) -> FlattenedMap:
    """I - [M; N] nest_project((M*, N*) .) on causal pairs."""
    inputs = causal_coordinates(f.plant.domain, pairs.domain)
    graph = left_multiplication_map(f.graph, inputs, pairs)
    graph_adjoint = left_multiplication_map(f.graph.T, pairs, inputs)
    return FlattenedMap.identity(pairs) - graph @ graph_adjoint


def _s_basis(projection: FlattenedMap, outputs: OperatorCoordinates, threshold: float) -> FlattenedMap:
    blocks = []
    for k, block in enumerate(projection.blocks):
        expected = outputs.rows_at(k).size
        if block.size == 0:
            kept = np.zeros((block.shape[0], 0))
        else:
            eigenvalues, vectors = eigh(0.5 * (block + block.T))
            kept = vectors[:, eigenvalues > threshold]
        if kept.shape[1] != expected:
            raise NumericalCertificateError(
                "s_basis_rank",
                float(abs(kept.shape[1] - expected)),
                0.0,
                f"S has dimension {kept.shape[1]} at time step {k}, expected {expected}",
            )
        blocks.append(kept)
    return FlattenedMap(outputs, projection.codomain_basis, tuple(blocks))


def build_proof_operators(
    f: CoprimeFactorization,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    strict: bool = True,
) -> ProofOperators:
    """Flatten Xi, Gamma and Upsilon and verify the identities linking them.

    Every map is block diagonal over the time step of the source column, so the
    projection onto S, its basis and each identity are handled block by block.

    Args:
        f: verified coprime factorization
        tolerances: thresholds; ``s_basis_threshold`` separates the unit eigenvalue
            cluster of the projection onto S
        strict: raise when a residual exceeds ``tolerances.certificate``

    Raises:
        NumericalCertificateError: S has the wrong dimension, or (strict) an
            identity failed
    """
    xi = xi_map(f)
    upsilon = upsilon_map(f)
    outputs, pairs = xi.domain_basis, xi.codomain_basis
    gamma = left_multiplication_map(f.left_graph, pairs, outputs)

    projection = _pair_projection(f, pairs)
    s_basis = _s_basis(projection, outputs, tolerances.s_basis_threshold)

    gamma_s = gamma @ s_basis
    xi_s = s_basis.adjoint() @ xi
    upsilon_norm = upsilon.norm()
    tau = gamma_s.min_gain()
    eye = FlattenedMap.identity(outputs)
    residuals = ProofResiduals(
        projection_idempotent=(projection @ projection - projection).norm(),
        projection_symmetric=(projection - projection.adjoint()).norm(),
        xi_range=(xi - s_basis @ xi_s).norm(),
        gamma_xi=(gamma_s @ xi_s - eye).norm(),
        xi_gamma=(xi_s @ gamma_s - eye).norm(),
        energy_split=(gamma_s @ gamma_s.adjoint() + upsilon.adjoint() @ upsilon - eye).norm(),
        norm_triangle=abs(tau**2 + upsilon_norm**2 - 1.0),
        xi_tau=abs(xi.norm() - 1.0 / tau),
    )
    logger.debug(f"Proof operators: dim S = {outputs.size}, residuals {residuals.max_residual:.2e}")
    if strict and residuals.max_residual > tolerances.certificate:
        worst = max(residuals.model_dump().items(), key=lambda item: item[1])
        raise NumericalCertificateError(worst[0], worst[1], tolerances.certificate)
    return ProofOperators(f, xi, gamma, upsilon, projection, s_basis, residuals)


class SchmidtResiduals(BaseModel):
    upsilon_forward: float
    upsilon_adjoint: float
    gamma_forward: float
    gamma_adjoint: float
    xi_forward: float
    xi_adjoint: float
    gamma_singular_value: float
    xi_singular_value: float

    @property
    def max_residual(self) -> float:
        return max(self.model_dump().values())


@dataclass(frozen=True, eq=False)
class SchmidtData:
    lam: float
    X: LtvOperator
    Y_star: LtvOperator
    W: LtvOperator
    residuals: SchmidtResiduals


def _nearest(values: np.ndarray, target: float) -> float:
    return float(np.min(np.abs(values - target))) if values.size else math.inf


def schmidt_pair_for(po: ProofOperators, x: np.ndarray, lam: float) -> SchmidtData:
    """Package a unit vector of a singular subspace of Upsilon (value lam) as SchmidtData."""
    c = math.sqrt(1.0 - lam**2)
    upsilon_x = po.upsilon.matvec(x)
    y = upsilon_x / lam
    w = po.gamma.rmatvec(x) / c
    w_s = po.s_basis.rmatvec(w)
    residuals = SchmidtResiduals(
        upsilon_forward=float(np.linalg.norm(upsilon_x - lam * y)),
        upsilon_adjoint=float(np.linalg.norm(po.upsilon.rmatvec(y) - lam * x)),
        gamma_forward=float(np.linalg.norm(po.gamma_on_s.matvec(w_s) - c * x)),
        gamma_adjoint=float(np.linalg.norm(po.gamma_on_s.rmatvec(x) - c * w_s)),
        xi_forward=float(np.linalg.norm(po.xi.matvec(x) - w / c)),
        xi_adjoint=float(np.linalg.norm(po.xi.rmatvec(w) - x / c)),
        gamma_singular_value=_nearest(po.gamma_on_s.singular_values, c),
        xi_singular_value=_nearest(po.xi.singular_values, 1.0 / c),
    )
    return SchmidtData(
        lam=float(lam),
        X=po.outputs.unflatten(x),
        Y_star=po.upsilon.codomain_basis.unflatten(y),
        W=po.pairs.unflatten(w),
        residuals=residuals,
    )


def schmidt_pairs(
    po: ProofOperators,
    k: int,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    strict: bool = True,
) -> list[SchmidtData]:
    """Top-k Schmidt pairs of Upsilon with their singular-value correspondences.

    Singular values at or below the rank tolerance are skipped, so a zero
    Upsilon yields an empty list.

    Args:
        po: proof operators of the factorization
        k: number of pairs requested
        tolerances: ``certificate`` bounds every Schmidt residual
        strict: raise when a pair misses the certificate tolerance

    Raises:
        NumericalCertificateError: a singular value is numerically 1, or (strict)
            a pair's residuals exceed ``tolerances.certificate``
    """
    top = po.upsilon.norm()
    cutoff = tolerances.rank * max(1.0, top)
    pairs = []
    for lam, _, right in po.upsilon.singular_triples(limit=k):
        if lam <= cutoff:
            break
        if lam >= 1.0 - tolerances.degenerate_lambda:
            raise NumericalCertificateError(
                "schmidt_value", lam, 1.0 - tolerances.degenerate_lambda, "singular value must stay below 1"
            )
        sd = schmidt_pair_for(po, right, lam)
        if strict and not sd.residuals.max_residual <= tolerances.certificate:
            raise NumericalCertificateError(
                "schmidt_pair",
                sd.residuals.max_residual,
                tolerances.certificate,
                f"pair {len(pairs)} with singular value {lam:.12g}",
            )
        pairs.append(sd)
    return pairs


class RecoveryReport(BaseModel):
    causal_part: float
    in_projection_range: float
    x_match: float
    y_match: float

    @property
    def max_residual(self) -> float:
        return max(self.model_dump().values())


def _match_up_to_sign(A: LtvOperator, B: LtvOperator) -> float:
    return min(hs_norm(A - B), hs_norm(A + B))


def recovery_check(po: ProofOperators, sd: SchmidtData) -> RecoveryReport:
    """Recover X and Y* from W alone and report how well they match the pair.

    Z = [-N_hat*; M_hat*](-N_hat, M_hat) W - (1 - lam^2) W must have no causal
    part, W must lie in the range of the projection onto S, and
    X = (1 - lam^2)^{-1/2} (-N_hat, M_hat) W, Y* = Z / (lam (1 - lam^2)^{1/2}).
    """
    f = po.factorization
    lam = sd.lam
    c = math.sqrt(1.0 - lam**2)
    column = stack_rows([-f.N_hat.T, f.M_hat.T])
    Z = column @ (f.left_graph @ sd.W) - (1.0 - lam**2) * sd.W
    w = po.pairs.flatten(nest_project(sd.W))
    in_range = math.hypot(
        float(np.linalg.norm(w - po.projection.matvec(w))),
        hs_norm(anticausal_part(sd.W)),
    )
    return RecoveryReport(
        causal_part=hs_norm(nest_project(Z)),
        in_projection_range=in_range,
        x_match=_match_up_to_sign((1.0 / c) * (f.left_graph @ sd.W), sd.X),
        y_match=_match_up_to_sign((1.0 / (lam * c)) * Z, sd.Y_star),
    )


class OptimalQCertificate(BaseModel):
    optimum: float
    achieved_norm: float
    attainment_residual: float
    schmidt_identity_residual: float
    top_multiplicity: int


def _top_singular_vectors(xi: FlattenedMap) -> list[np.ndarray]:
    floor = xi.norm() * (1.0 - TOP_CLUSTER_RTOL)
    return [right for _, _, right in xi.singular_triples(floor=floor)]


def optimal_q_certificate(
    f: CoprimeFactorization,
    Q: LtvOperator,
    po: ProofOperators | None = None,
) -> OptimalQCertificate:
    """Attainment of the optimum and the Schmidt identity Q X = -nest_project(R X) on the top subspace of Xi."""
    xi = po.xi if po is not None else xi_map(f)
    R = symbol_R(f)
    optimum = xi.norm()
    achieved = operator_norm(f.completion + f.graph @ Q)
    outputs = xi.domain_basis
    top = _top_singular_vectors(xi)
    identity_residual = 0.0
    for x in top:
        X = outputs.unflatten(x)
        identity_residual = max(identity_residual, hs_norm(Q @ X + nest_project(R @ X)))
    return OptimalQCertificate(
        optimum=optimum,
        achieved_norm=achieved,
        attainment_residual=abs(achieved - optimum),
        schmidt_identity_residual=identity_residual,
        top_multiplicity=len(top),
    )


def optimal_q(
    f: CoprimeFactorization,
    po: ProofOperators | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> LtvOperator:
    """The causal parameter attaining inf ||[U + MQ; V + NQ]||.

    Obtained as the Nehari extension of the symbol R, since
    ||[U + MQ; V + NQ]|| = (1 + ||R + Q||^2)^{1/2}.

    Raises:
        NumericalCertificateError: attainment or the Schmidt identity failed
    """
    sweep = parrott_sweep(symbol_R(f))
    certificate = optimal_q_certificate(f, sweep.Q, po)
    if certificate.attainment_residual > tolerances.certificate:
        raise NumericalCertificateError(
            "optimal_q_attainment", certificate.attainment_residual, tolerances.certificate
        )
    if certificate.schmidt_identity_residual > tolerances.schmidt:
        raise NumericalCertificateError(
            "optimal_q_schmidt_identity", certificate.schmidt_identity_residual, tolerances.schmidt
        )
    return sweep.Q


def robust_controller(
    f: CoprimeFactorization,
    Q: LtvOperator,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> LtvOperator:
    """C = (U + MQ)(V + NQ)^{-1}.

    Raises:
        ControllerSynthesisError: a diagonal block of V + NQ has condition number
            above ``tolerances.controller_condition``
    """
    numerator = f.U + f.M @ Q
    denominator = f.V + f.N @ Q
    try:
        inverse = solve_causal_inverse(denominator, rtol=1.0 / tolerances.controller_condition)
    except SingularDiagonalBlockError as e:
        condition = (
            e.largest_singular_value / e.smallest_singular_value
            if e.smallest_singular_value > 0
            else math.inf
        )
        raise ControllerSynthesisError(
            "controller_denominator",
            condition,
            tolerances.controller_condition,
            f"diagonal block {e.block_index} of V + NQ is ill-conditioned",
        ) from e
    C = numerator @ inverse
    if not is_causal(C, tolerances.structural):
        raise ControllerSynthesisError("controller_causality", 1.0, tolerances.structural)
    return C


class ClosedLoopCertificate(BaseModel):
    input_sensitivity_norm: float
    controller_sensitivity_norm: float
    plant_sensitivity_norm: float
    output_sensitivity_norm: float
    achieved_margin: float
    controller_causal: bool


def closed_loop_maps(P: LtvOperator, C: LtvOperator) -> dict[str, LtvOperator]:
    """Blocks of the inverse of [[I, -C], [-P, I]].

    Returns:
        Mapping with (I - CP)^{-1}, C(I - PC)^{-1}, P(I - CP)^{-1} and (I - PC)^{-1}.

    Raises:
        ControllerSynthesisError: the interconnection is not causally invertible
    """
    inputs, outputs = P.domain, P.codomain
    loop = stack_rows(
        [
            stack_columns([identity(inputs), -C]),
            stack_columns([-P, identity(outputs)]),
        ]
    )
    try:
        inverse = solve_causal_inverse(loop, rtol=1.0 / DEFAULT_TOLERANCES.controller_condition)
    except SingularDiagonalBlockError as e:
        raise ControllerSynthesisError(
            "closed_loop_inverse", math.inf, DEFAULT_TOLERANCES.controller_condition, str(e)
        ) from e
    top, bottom = split_rows(inverse, [inputs, outputs])
    top_left, top_right = (X.T for X in split_rows(top.T, [inputs, outputs]))
    bottom_left, bottom_right = (X.T for X in split_rows(bottom.T, [inputs, outputs]))
    return {
        "input_sensitivity": top_left,
        "controller_sensitivity": top_right,
        "plant_sensitivity": bottom_left,
        "output_sensitivity": bottom_right,
    }


def closed_loop_certificate(P: LtvOperator, C: LtvOperator) -> ClosedLoopCertificate:
    """Norms of the four closed-loop maps and the margin 1/||[C; I](I - PC)^{-1}[I, P]||."""
    maps = closed_loop_maps(P, C)
    outputs = P.codomain
    gain = (
        stack_rows([C, identity(outputs)])
        @ maps["output_sensitivity"]
        @ stack_columns([identity(outputs), P])
    )
    return ClosedLoopCertificate(
        input_sensitivity_norm=operator_norm(maps["input_sensitivity"]),
        controller_sensitivity_norm=operator_norm(maps["controller_sensitivity"]),
        plant_sensitivity_norm=operator_norm(maps["plant_sensitivity"]),
        output_sensitivity_norm=operator_norm(maps["output_sensitivity"]),
        achieved_margin=1.0 / operator_norm(gain),
        controller_causal=is_causal(C),
    )


class SchmidtSummary(BaseModel):
    lam: float
    max_residual: float
    recovery_max_residual: float


class SynthesisReport(BaseModel):
    r_o: float
    optimal_q: OptimalQCertificate
    proof_residuals: ProofResiduals
    schmidt: list[SchmidtSummary]
    closed_loop: ClosedLoopCertificate
    margin_residual: float


def synthesize(
    f: CoprimeFactorization,
    schmidt_count: int = 3,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[LtvOperator, LtvOperator, SynthesisReport]:
    """Optimal parameter, robust controller and every certificate behind them.

    Returns:
        Tuple (Q_o, C, report).

    Raises:
        NumericalCertificateError: a certificate failed; ControllerSynthesisError
            when the closed-loop margin misses r_o
    """
    po = build_proof_operators(f, tolerances)
    Q = optimal_q(f, po, tolerances)
    C = robust_controller(f, Q, tolerances)
    closed_loop = closed_loop_certificate(f.plant, C)
    certificate = optimal_q_certificate(f, Q, po)
    r_o = 1.0 / certificate.optimum
    margin_residual = abs(closed_loop.achieved_margin - r_o)
    if margin_residual > tolerances.schmidt:
        raise ControllerSynthesisError("controller_margin", margin_residual, tolerances.schmidt)
    summaries = [
        SchmidtSummary(
            lam=sd.lam,
            max_residual=sd.residuals.max_residual,
            recovery_max_residual=recovery_check(po, sd).max_residual,
        )
        for sd in schmidt_pairs(po, schmidt_count, tolerances)
    ]
    logger.info(f"Controller synthesized: margin {closed_loop.achieved_margin:.12g} (r_o {r_o:.12g})")
    report = SynthesisReport(
        r_o=r_o,
        optimal_q=certificate,
        proof_residuals=po.residuals,
        schmidt=summaries,
        closed_loop=closed_loop,
        margin_residual=margin_residual,
    )
    return Q, C, report
