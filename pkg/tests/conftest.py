import numpy as np
import pytest

from ltv_robust.core import toeplitz_lift
from ltv_robust.selftest import random_plant


@pytest.fixture()
def rng():
    """Seeded random generator so randomized tests are reproducible."""
    return np.random.default_rng(20240611)


@pytest.fixture()
def delay_plant():
    """Unit delay y_k = u_{k-1} over T = 3."""
    return toeplitz_lift([0.0, 1.0], 3)


@pytest.fixture()
def static_gain():
    """Factory for the memoryless plant y_k = g u_k."""

    def _make(g: float, horizon: int = 3):
        return toeplitz_lift([g], horizon)

    return _make


@pytest.fixture()
def seeded_plant():
    """Factory for a random causal plant with T in 2 .. max_horizon and block dims <= 2."""

    def _make(seed: int, max_horizon: int = 8):
        rng = np.random.default_rng(seed)
        return random_plant(rng, int(rng.integers(2, max_horizon + 1)))

    return _make
