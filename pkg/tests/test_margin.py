import math
from unittest.mock import patch

import numpy as np
import pytest

from ltv_robust.config import Tolerances
from ltv_robust.coprime import factorize, reparameterize
from ltv_robust.core import (
    SignalSpace,
    identity,
    operator_norm,
    random_causal,
    toeplitz_lift,
    zeros,
)
from ltv_robust.errors import NumericalCertificateError
from ltv_robust.margin import (
    BOUNDARY_WINDOW,
    corona_criterion,
    left_inverse_norm,
    lti_margin_oracle,
    margin_profile,
    margin_report,
    r_upper,
    r_upper_alt,
    symbol_R,
    ball_radius,
)

DELAY_MARGIN = 1.0 / math.sqrt(2.0)


@pytest.fixture()
def random_factorization(rng):
    """Factorization of a random causal plant over T = 5."""
    return factorize(random_causal(rng, SignalSpace((1, 2, 1, 1, 2)), SignalSpace((2, 1, 1, 2, 1))))


# Test the Hankel symbol and r_o
def test_delay_symbol_is_upper_shift(delay_plant):
    """Test that the delay's symbol R is the backward shift."""
    R = symbol_R(factorize(delay_plant))
    assert np.allclose(R.matrix, np.eye(3, k=1), atol=1e-12)


@pytest.mark.parametrize("horizon", range(2, 11))
def test_delay_margin_at_every_horizon(horizon):
    """Test r_o = 1/sqrt(2) for the pure delay at T = 2 .. 10."""
    hankel_norm, r_o = r_upper(factorize(toeplitz_lift([0.0, 1.0], horizon)))
    assert abs(hankel_norm - 1.0) < 1e-10
    assert abs(r_o - DELAY_MARGIN) < 1e-10


@pytest.mark.parametrize("g", [0.0, 0.5, 1.0, 2.0])
def test_static_gain_margin(g, static_gain):
    """Test that memoryless plants have r_o = 1 and a flat profile of ones."""
    f = factorize(static_gain(g))
    report = margin_report(f)
    assert abs(report.r_o - 1.0) < 1e-12
    assert abs(report.r_o_alt - 1.0) < 1e-8
    assert np.allclose(report.profile, 1.0)
    assert abs(report.corona_value - 1.0) < 1e-10


def test_zero_plant_margins():
    """Test the trivial plant P = 0."""
    space = SignalSpace.uniform(1, 3)
    f = factorize(zeros(space, space))
    upsilon, r_o_alt = r_upper_alt(f)
    assert upsilon < 1e-14
    assert r_o_alt == pytest.approx(1.0)
    assert abs(ball_radius(f) - 1.0) < 1e-14
    assert corona_criterion(identity(space), zeros(space, space)) == pytest.approx(1.0)


def test_dual_formulas_agree(random_factorization):
    """Test |r_o - r_o_alt| < 1e-8 on a random plant."""
    _, r_o = r_upper(random_factorization)
    _, r_o_alt = r_upper_alt(random_factorization)
    assert 0.0 < r_o <= 1.0
    assert abs(r_o - r_o_alt) < 1e-8


def test_margin_is_independent_of_completion(random_factorization, rng):
    """Test that a causally shifted completion leaves r_o unchanged."""
    P = random_factorization.plant
    shifted = reparameterize(random_factorization, random_causal(rng, P.domain, P.codomain))
    assert abs(r_upper(shifted)[1] - r_upper(random_factorization)[1]) < 1e-9


# Test the full report
def test_delay_margin_report(delay_plant):
    """Test every quantity of the report on the delay over T = 3."""
    f = factorize(delay_plant)
    report = margin_report(f)
    assert abs(report.r_o - DELAY_MARGIN) < 1e-10
    assert abs(report.upsilon_norm - DELAY_MARGIN) < 1e-8
    assert abs(report.profile[0] - math.sqrt(2.0)) < 1e-8
    assert report.profile_indices == [-1, 0, 1]
    assert report.bracket_lower == report.r_o
    assert report.bracket_upper >= report.r_o
    assert abs(report.corona_value - math.sqrt(2.0)) < 1e-8
    assert report.corona_value <= report.corona_left_inverse_bound + 1e-8
    assert abs(report.ball_radius - DELAY_MARGIN) < 1e-8


def test_profile_is_nonincreasing(random_factorization):
    """Test that restricting the domain never increases the profile."""
    profile = margin_profile(random_factorization)
    assert all(later <= earlier + 1e-10 for earlier, later in zip(profile, profile[1:]))
    _, r_o = r_upper(random_factorization)
    assert all(r_o <= 1.0 / entry + 1e-10 for entry in profile)


def test_profile_boundary_flags(random_factorization):
    """Test that entries close to the horizon are flagged as boundary artifacts."""
    report = margin_report(random_factorization)
    horizon = random_factorization.plant.horizon
    expected = [n > horizon - BOUNDARY_WINDOW for n in report.profile_indices]
    assert report.profile_boundary == expected
    assert report.ball_radius <= 1.0 + 1e-12


def test_corona_reports_kernel_as_infinite():
    """Test that a truncated column with a kernel has no bounded left inverse."""
    space = SignalSpace.uniform(1, 3)
    shift = toeplitz_lift([0.0, 1.0], 3)
    assert corona_criterion(shift, zeros(space, space)) == math.inf


def test_certificate_failure_is_raised(random_factorization):
    """Test that an unreachable certificate tolerance raises."""
    with pytest.raises(NumericalCertificateError, match="Certificate"):
        margin_report(random_factorization, Tolerances(certificate=-1.0))


# Test the time-invariant oracle
def test_lti_oracle_closed_forms():
    """Test the delay and static closed forms of the time-invariant margin."""
    assert abs(lti_margin_oracle([0.0, 1.0]) - DELAY_MARGIN) < 1e-8
    assert abs(lti_margin_oracle([0.7]) - 1.0) < 1e-12


def test_lifted_margin_converges_to_lti_oracle():
    """Test that the lifted margin of h = (0, 0.5) at T = 40 is within 1e-3 of the oracle."""
    _, r_o = r_upper(factorize(toeplitz_lift([0.0, 0.5], 40)))
    assert abs(r_o - lti_margin_oracle([0.0, 0.5])) < 1e-3


def test_lti_oracle_rejects_unit_circle_roots():
    """Test that a spectral factor root on the unit circle is refused."""
    with patch("ltv_robust.margin.np.roots", return_value=np.array([1.0, 1.0])):
        with pytest.raises(NumericalCertificateError, match="spectral_factorization"):
            lti_margin_oracle([0.0, 1.0])


def test_left_inverse_norm_bounds_corona(random_factorization):
    """Test that the explicit left inverse bounds the corona value."""
    assert corona_criterion(random_factorization.M, random_factorization.N) <= left_inverse_norm(
        random_factorization
    ) + 1e-8
    assert operator_norm(random_factorization.graph) == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(100))
def test_dual_formulas_on_random_plants(seed, seeded_plant):
    """Test that the Hankel and anticausal-map routes to r_o agree within 1e-8."""
    f = factorize(seeded_plant(seed))
    _, r_o = r_upper(f)
    _, r_o_alt = r_upper_alt(f)
    assert abs(r_o - r_o_alt) < 1e-8


@pytest.mark.parametrize("seed", range(10))
def test_lifted_random_fir_matches_lti_oracle(seed):
    """Test that random FIR plants lifted to T = 40 reproduce the time-invariant margin."""
    rng = np.random.default_rng(seed)
    h = rng.uniform(-0.5, 0.5, size=int(rng.integers(2, 5)))
    _, r_o = r_upper(factorize(toeplitz_lift(h, 40)))
    assert abs(r_o - lti_margin_oracle(h)) < 1e-3


def test_long_horizon_margin_report():
    """Test the full report of the delay lifted to T = 60."""
    report = margin_report(factorize(toeplitz_lift([0.0, 1.0], 60)))
    assert abs(report.r_o - DELAY_MARGIN) < 1e-9
    assert abs(report.r_o_alt - DELAY_MARGIN) < 1e-8
    assert len(report.profile) == 60
