"""Randomized property suite run by ``ltv_robust selftest``."""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from pydantic import BaseModel

from ltv_robust.config import DEFAULT_TOLERANCES, Tolerances
from ltv_robust.coprime import factorize, normalized_lcf, normalized_rcf
from ltv_robust.core import (
    LtvOperator,
    SignalSpace,
    flip,
    operator_norm,
    random_causal,
    random_operator,
    random_space,
)
from ltv_robust.errors import SystemValidationError
from ltv_robust.gap import tv_gap
from ltv_robust.margin import r_upper, r_upper_alt
from ltv_robust.nehari import distance_to_causal, flatten_hankel, parrott_sweep
from ltv_robust.synthesis import build_proof_operators, recovery_check, schmidt_pairs, synthesize

logger = logging.getLogger(__name__)


class CheckResult(BaseModel):
    name: str
    cases: int
    max_residual: float
    tolerance: float
    passed: bool


class SelftestReport(BaseModel):
    seed: int
    count: int
    max_horizon: int
    checks: list[CheckResult]
    passed: bool


@dataclass
class _Check:
    name: str
    tolerance: float
    residuals: list[float] = field(default_factory=list)

    def result(self) -> CheckResult:
        worst = max(self.residuals, default=0.0)
        return CheckResult(
            name=self.name,
            cases=len(self.residuals),
            max_residual=worst,
            tolerance=self.tolerance,
            passed=bool(worst <= self.tolerance),
        )


def random_plant(
    rng: np.random.Generator,
    horizon: int,
    max_dim: int = 2,
    inputs: SignalSpace | None = None,
    outputs: SignalSpace | None = None,
) -> LtvOperator:
    inputs = inputs or random_space(rng, horizon, max_dim)
    outputs = outputs or random_space(rng, horizon, max_dim)
    return random_causal(rng, outputs, inputs)


def _duality_residual(P: LtvOperator) -> float:
    M_hat, N_hat = normalized_lcf(P)
    M_flip, N_flip = normalized_rcf(flip(P))
    return max(operator_norm(M_hat - flip(M_flip)), operator_norm(N_hat - flip(N_flip)))


def run_selftest(
    seed: int,
    count: int = 20,
    max_horizon: int = 6,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    progress: Callable[[str], None] | None = None,
) -> SelftestReport:
    """Check the toolkit's identities on ``count`` random plants drawn from ``seed``.

    Plants have horizons 2 .. max_horizon and block dimensions 1 or 2.

    Raises:
        SystemValidationError: count < 1 or max_horizon < 2
    """
    if count < 1:
        raise SystemValidationError(f"count must be >= 1, got {count}")
    if max_horizon < 2:
        raise SystemValidationError(f"max_horizon must be >= 2, got {max_horizon}")
    rng = np.random.default_rng(seed)
    checks = {
        name: _Check(name, tol)
        for name, tol in (
            ("factorization_residuals", tolerances.identity),
            ("factor_duality", tolerances.structural),
            ("nehari_equality", 10 * tolerances.certificate),
            ("nehari_attainment", tolerances.certificate),
            ("dual_margin_formulas", tolerances.certificate),
            ("proof_identities", tolerances.certificate),
            ("schmidt_chain", tolerances.schmidt),
            ("schmidt_recovery", tolerances.schmidt),
            ("gap_metric_axioms", 10 * tolerances.structural),
            ("gap_max_identity", 10 * tolerances.structural),
            ("synthesis_margin", tolerances.schmidt),
        )
    }
    for case in range(count):
        horizon = int(rng.integers(2, max_horizon + 1))
        inputs = random_space(rng, horizon)
        outputs = random_space(rng, horizon)
        plants = [random_plant(rng, horizon, inputs=inputs, outputs=outputs) for _ in range(3)]
        factors = [factorize(P, math.inf) for P in plants]
        f = factors[0]

        checks["factorization_residuals"].residuals.append(f.residuals.max_residual)
        checks["factor_duality"].residuals.append(_duality_residual(plants[0]))

        R = random_operator(rng, random_space(rng, horizon), random_space(rng, horizon))
        checks["nehari_equality"].residuals.append(abs(distance_to_causal(R) - flatten_hankel(R).norm()))
        sweep = parrott_sweep(R)
        checks["nehari_attainment"].residuals.append(abs(sweep.achieved - sweep.target))

        _, r_o = r_upper(f, math.inf)
        _, r_o_alt = r_upper_alt(f)
        checks["dual_margin_formulas"].residuals.append(abs(r_o - r_o_alt))

        po = build_proof_operators(f, tolerances, strict=False)
        checks["proof_identities"].residuals.append(po.residuals.max_residual)
        for sd in schmidt_pairs(po, 3, tolerances, strict=False):
            checks["schmidt_chain"].residuals.append(sd.residuals.max_residual)
            checks["schmidt_recovery"].residuals.append(recovery_check(po, sd).max_residual)

        gap_12 = tv_gap(factors[0], factors[1])
        gap_23 = tv_gap(factors[1], factors[2])
        gap_13 = tv_gap(factors[0], factors[2])
        gap_21 = tv_gap(factors[1], factors[0])
        checks["gap_metric_axioms"].residuals.extend(
            [
                tv_gap(f, f).alpha,
                abs(gap_12.alpha - gap_21.alpha),
                max(0.0, gap_13.alpha - gap_12.alpha - gap_23.alpha),
            ]
        )
        checks["gap_max_identity"].residuals.append(gap_12.max_identity_residual)

        _, _, synthesis = synthesize(
            f, schmidt_count=1, tolerances=Tolerances(certificate=math.inf, schmidt=math.inf)
        )
        checks["synthesis_margin"].residuals.append(
            max(synthesis.margin_residual, synthesis.optimal_q.attainment_residual)
        )
        if progress is not None:
            progress(f"case {case + 1}/{count} (T={horizon})")

    results = [check.result() for check in checks.values()]
    passed = all(result.passed for result in results)
    if not passed:
        failed = [result.name for result in results if not result.passed]
        logger.error(f"Selftest failures: {', '.join(failed)}")
    return SelftestReport(seed=seed, count=count, max_horizon=max_horizon, checks=results, passed=passed)
