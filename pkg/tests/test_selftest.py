import numpy as np
import pytest

from ltv_robust.core import is_causal
from ltv_robust.errors import SystemValidationError
from ltv_robust.selftest import random_plant, run_selftest


def test_random_plant_is_causal():
    """Test that random plants are causal with the requested horizon."""
    plant = random_plant(np.random.default_rng(0), 4)
    assert plant.horizon == 4
    assert is_causal(plant)


def test_selftest_passes_and_is_reproducible():
    """Test that the suite passes on a few small plants and repeats under its seed."""
    messages = []
    first = run_selftest(seed=5, count=2, max_horizon=4, progress=messages.append)
    second = run_selftest(seed=5, count=2, max_horizon=4)
    assert first.passed, [check for check in first.checks if not check.passed]
    assert first == second
    assert len(messages) == 2
    assert {check.name for check in first.checks} >= {"nehari_equality", "schmidt_chain", "gap_max_identity"}


@pytest.mark.parametrize(("count", "max_horizon"), [(0, 4), (-1, 4), (2, 1), (2, 0)])
def test_selftest_rejects_degenerate_options(count, max_horizon):
    """Test that an empty suite or a horizon below two is refused up front."""
    with pytest.raises(SystemValidationError, match="must be >="):
        run_selftest(seed=0, count=count, max_horizon=max_horizon)
