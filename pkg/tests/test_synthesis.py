import math
from dataclasses import replace
from unittest.mock import patch

import numpy as np
import pytest

from ltv_robust.config import Tolerances
from ltv_robust.coprime import factorize, reparameterize
from ltv_robust.core import (
    SignalSpace,
    hs_norm,
    identity,
    is_causal,
    operator_norm,
    random_causal,
    toeplitz_lift,
    zeros,
)
from ltv_robust.errors import ControllerSynthesisError, NumericalCertificateError, SingularDiagonalBlockError
from ltv_robust.margin import r_upper
from ltv_robust.nehari import FlattenedMap
from ltv_robust.synthesis import (
    build_proof_operators,
    closed_loop_certificate,
    closed_loop_maps,
    optimal_q,
    optimal_q_certificate,
    robust_controller,
    recovery_check,
    schmidt_pair_for,
    schmidt_pairs,
    synthesize,
)

DELAY_MARGIN = 1.0 / math.sqrt(2.0)


@pytest.fixture()
def random_factorization(rng):
    """Factorization of a random causal plant over T = 4."""
    return factorize(random_causal(rng, SignalSpace((2, 1, 1, 2)), SignalSpace((1, 1, 2, 1))))


@pytest.fixture()
def delay_proof_operators(delay_plant):
    """Proof operators of the delay over T = 3."""
    return build_proof_operators(factorize(delay_plant))


# Test proof operators
def test_zero_plant_proof_operators():
    """Test that P = 0 has no anticausal part and an isometric Xi."""
    space = SignalSpace.uniform(1, 3)
    po = build_proof_operators(factorize(zeros(space, space)))
    assert po.upsilon.norm() < 1e-14
    assert abs(po.xi.norm() - 1.0) < 1e-12
    assert schmidt_pairs(po, 3) == []


def test_delay_proof_operator_norms(delay_proof_operators):
    """Test the norms of Upsilon, Xi and the minimal gain of Gamma for the delay."""
    po = delay_proof_operators
    assert abs(po.upsilon.norm() - DELAY_MARGIN) < 1e-10
    assert abs(po.xi.norm() - math.sqrt(2.0)) < 1e-10
    assert abs(po.tau() - DELAY_MARGIN) < 1e-10


def test_random_proof_identities(random_factorization):
    """Test the projection laws and the inverse pair Gamma, Xi on a random plant."""
    po = build_proof_operators(random_factorization)
    assert po.residuals.projection_idempotent < 1e-10
    assert po.residuals.projection_symmetric < 1e-10
    assert po.residuals.gamma_xi < 1e-9
    assert po.residuals.xi_gamma < 1e-9
    assert po.residuals.max_residual < 1e-8
    assert po.s_basis.domain_basis == po.outputs
    assert po.s_basis.codomain_basis == po.pairs
    assert (po.s_basis.adjoint() @ po.s_basis - FlattenedMap.identity(po.outputs)).norm() < 1e-12
    assert (po.projection @ po.s_basis - po.s_basis).norm() < 1e-10


def test_strict_build_raises_on_unreachable_tolerance(random_factorization):
    """Test that strict mode raises when a residual exceeds the certificate tolerance."""
    with pytest.raises(NumericalCertificateError):
        build_proof_operators(random_factorization, Tolerances(certificate=-1.0))
    relaxed = build_proof_operators(random_factorization, Tolerances(certificate=-1.0), strict=False)
    assert relaxed.residuals.max_residual >= 0.0


# Test Schmidt pairs
def test_schmidt_pairs_satisfy_correspondences(random_factorization):
    """Test the singular-value correspondences of Upsilon, Gamma and Xi."""
    po = build_proof_operators(random_factorization)
    pairs = schmidt_pairs(po, 3)
    assert pairs
    values = [sd.lam for sd in pairs]
    assert values == sorted(values, reverse=True)
    for sd in pairs:
        assert 0.0 < sd.lam < 1.0
        assert abs(hs_norm(sd.X) - 1.0) < 1e-12
        assert is_causal(sd.X)
        assert sd.residuals.max_residual < 1e-8


def test_recovers_pair_from_w(random_factorization):
    """Test that X and Y* are recovered from W with a causal-free Z."""
    po = build_proof_operators(random_factorization)
    for sd in schmidt_pairs(po, 2):
        report = recovery_check(po, sd)
        assert report.max_residual < 1e-7


def test_recovery_detects_perturbed_w(delay_proof_operators):
    """Test that moving W along the graph leaves a visible causal part in Z."""
    po = delay_proof_operators
    sd = schmidt_pairs(po, 1)[0]
    graph = po.factorization.graph
    E = graph * (1e-3 / hs_norm(graph))
    report = recovery_check(po, replace(sd, W=sd.W + E))
    assert report.causal_part >= 1e-4


def test_schmidt_pairs_enforce_certificate_tolerance(random_factorization):
    """Test that pairs missing the certificate tolerance raise unless strict is off."""
    po = build_proof_operators(random_factorization)
    with pytest.raises(NumericalCertificateError, match="schmidt_pair"):
        schmidt_pairs(po, 2, Tolerances(certificate=-1.0))
    relaxed = schmidt_pairs(po, 2, Tolerances(certificate=-1.0), strict=False)
    assert len(relaxed) == 2


def _inflated_pair(po, x, lam):
    sd = schmidt_pair_for(po, x, lam)
    return replace(sd, residuals=sd.residuals.model_copy(update={"xi_forward": 1.0}))


def test_synthesize_checks_schmidt_pairs(random_factorization):
    """Test that synthesis stops when a Schmidt pair misses its tolerance."""
    with patch("ltv_robust.synthesis.schmidt_pair_for", side_effect=_inflated_pair):
        with pytest.raises(NumericalCertificateError, match="schmidt_pair"):
            synthesize(random_factorization)


def test_repeated_singular_value_accepts_any_mixture(rng):
    """Test that any unit vector of a repeated top singular subspace gives a valid pair."""
    po = build_proof_operators(factorize(toeplitz_lift([0.0, 1.0], 4, block_dim=2)))
    top = po.upsilon.norm()
    cluster = po.upsilon.singular_triples(floor=top * (1.0 - 1e-10))
    assert len(cluster) >= 2
    assert abs(top - DELAY_MARGIN) < 1e-10
    weights = rng.standard_normal(len(cluster))
    x = sum(weight * right for weight, (_, _, right) in zip(weights, cluster))
    x /= np.linalg.norm(x)
    sd = schmidt_pair_for(po, x, top)
    assert sd.residuals.max_residual < 1e-8
    assert recovery_check(po, sd).max_residual < 1e-8


def test_degenerate_schmidt_value_is_rejected(delay_proof_operators):
    """Test that a singular value numerically equal to one is refused."""
    with pytest.raises(NumericalCertificateError, match="schmidt_value"):
        schmidt_pairs(delay_proof_operators, 1, Tolerances(degenerate_lambda=0.5))


# Test the optimal parameter and the controller
def test_delay_optimal_parameter_is_zero(delay_proof_operators):
    """Test that the central solution for the delay is Q = 0 and hence C = 0."""
    f = delay_proof_operators.factorization
    Q = optimal_q(f, delay_proof_operators)
    assert operator_norm(Q) < 1e-10
    C = robust_controller(f, Q)
    assert operator_norm(C) < 1e-10


def test_optimal_parameter_certificate(random_factorization):
    """Test attainment of the optimum and the Schmidt identity."""
    po = build_proof_operators(random_factorization)
    Q = optimal_q(random_factorization, po)
    certificate = optimal_q_certificate(random_factorization, Q, po)
    assert is_causal(Q)
    assert certificate.attainment_residual < 1e-8
    assert certificate.schmidt_identity_residual < 1e-7
    assert certificate.top_multiplicity >= 1


def test_controller_reports_singular_denominator(delay_plant):
    """Test that an ill-conditioned V + NQ raises a synthesis error."""
    f = factorize(delay_plant)
    with patch(
        "ltv_robust.synthesis.solve_causal_inverse",
        side_effect=SingularDiagonalBlockError(1, 1e-14, 1.0),
    ):
        with pytest.raises(ControllerSynthesisError, match="controller_denominator"):
            robust_controller(f, zeros(delay_plant.domain, delay_plant.codomain))


def test_closed_loop_of_zero_controller(delay_plant):
    """Test that with C = 0 the closed-loop maps reduce to I, 0, P and I."""
    C = zeros(delay_plant.domain, delay_plant.codomain)
    maps = closed_loop_maps(delay_plant, C)
    eye = identity(delay_plant.domain).matrix
    assert np.allclose(maps["input_sensitivity"].matrix, eye)
    assert not maps["controller_sensitivity"].matrix.any()
    assert np.allclose(maps["plant_sensitivity"].matrix, delay_plant.matrix)
    assert np.allclose(maps["output_sensitivity"].matrix, eye)
    certificate = closed_loop_certificate(delay_plant, C)
    assert abs(certificate.achieved_margin - DELAY_MARGIN) < 1e-10
    assert certificate.controller_causal


def test_static_gain_controller():
    """Test that a static plant is stabilized with the full margin of one."""
    _, C, report = synthesize(factorize(toeplitz_lift([2.0], 3)))
    assert abs(report.r_o - 1.0) < 1e-10
    assert abs(report.closed_loop.achieved_margin - 1.0) < 1e-8
    assert is_causal(C)
    assert report.schmidt == []


def test_synthesize_random_plant(random_factorization):
    """Test that the controller achieves r_o on a random plant."""
    Q, C, report = synthesize(random_factorization, schmidt_count=2)
    assert is_causal(Q) and is_causal(C)
    assert report.margin_residual < 1e-7
    assert abs(report.closed_loop.achieved_margin - report.r_o) < 1e-7
    assert len(report.schmidt) <= 2


@pytest.mark.parametrize("seed", range(20))
def test_top_schmidt_pairs_on_random_plants(seed, seeded_plant):
    """Test the Schmidt chain and its singular-value correspondences for the top three values."""
    po = build_proof_operators(factorize(seeded_plant(seed)))
    for sd in schmidt_pairs(po, 3):
        assert sd.residuals.max_residual < 1e-7
        assert sd.residuals.gamma_singular_value < 1e-8
        assert sd.residuals.xi_singular_value < 1e-8


@pytest.mark.parametrize("seed", range(50))
def test_synthesis_optimality_on_random_plants(seed, seeded_plant):
    """Test that Q_o attains 1/r_o, C is causal and r_o ignores the Bezout completion."""
    f = factorize(seeded_plant(seed))
    _, r_o = r_upper(f)
    Q, C, report = synthesize(f, schmidt_count=1)
    assert abs(operator_norm(f.completion + f.graph @ Q) - 1.0 / r_o) < 1e-8
    assert is_causal(C)
    rng = np.random.default_rng(seed)
    shifted = reparameterize(f, random_causal(rng, f.plant.domain, f.plant.codomain))
    assert abs(r_upper(shifted)[1] - r_o) < 1e-9
