"""
Shared fixtures for the test suite.
"""

import numpy as np
import pytest

from src.bandit.core import BanditInstance
from src.common.constants import DEMO_INIT_POLICY, DEMO_REWARDS
from src.mdp.core import TabularMdp


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def demo_bandit():
    """Three arms with rewards (1, 0.9, 0.1)."""
    return BanditInstance(np.array(DEMO_REWARDS), distinct=True)


@pytest.fixture
def demo_policy():
    return np.array(DEMO_INIT_POLICY)


@pytest.fixture
def chain_mdp():
    return TabularMdp.two_state_chain(0.9)


@pytest.fixture
def random_mdp(rng):
    return TabularMdp.random(rng, 4, 3, gamma=0.9, min_margin=0.05)


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "out"
    path.mkdir()
    return path
