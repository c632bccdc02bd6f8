from __future__ import annotations

import numpy as np
import pytest

from biquad import Domain, OptConfig, build_rule


@pytest.fixture(scope="session")
def interval_rule_p4():
    """Degree-4 interval rule; lands on the 5-point Gauss configuration."""
    return build_rule(Domain.interval(), 4, cfg=OptConfig(n_starts=6, seed=3))


@pytest.fixture(scope="session")
def tri2_rule():
    """Degree-2 triangle rule shared by the rule/bench tests."""
    return build_rule(Domain.triangle(), 2, cfg=OptConfig(n_starts=40, seed=7))


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
