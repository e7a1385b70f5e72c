"""
Shared fixtures: small Garnet MDPs and hand-built single-state models
"""

import pytest
import numpy as np
import sys
import os

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.mdp import Mdp, GarnetConfig, garnet_generate
from core.metrics import FixedPointConfig


TOL = 1e-6


def one_state_mdp(rewards, gamma=0.5, reward_max=1.0) -> Mdp:
    """Single state, one action per reward entry, every action self-looping"""
    rewards = np.atleast_2d(np.asarray(rewards, dtype=float))
    num_actions = rewards.shape[1]
    return Mdp(rewards=rewards, transitions=np.ones((1, num_actions, 1)), gamma=gamma, reward_max=reward_max)


def small_garnet(seed, gamma=0.5, num_states=6, num_actions=2, branching=0.5) -> Mdp:
    return garnet_generate(GarnetConfig(
        num_states=num_states,
        num_actions=num_actions,
        branching_fraction=branching,
        gamma=gamma,
        seed=seed,
    ))


@pytest.fixture
def fp():
    return FixedPointConfig(tol=TOL)


@pytest.fixture
def garnet_pair():
    return small_garnet(11), small_garnet(12)


@pytest.fixture
def garnet_triple():
    return small_garnet(21), small_garnet(22), small_garnet(23)
