"""
Test suite for bisimulation metrics
"""

import pytest
import numpy as np
import sys
import os
from hypothesis import given, settings, strategies as st

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.exceptions import (
    EmptySet, GammaMismatch, ActionSpaceMismatch, MaxItersExceeded, ShapeMismatch, InvalidParameter
)
from core.mdp import Mdp, Policy, value_iteration_optimal
from core.metrics import (
    FixedPointConfig, MetricMatrix, hausdorff, delta_cost, gbsm, bsm, gbsm_conference,
    gbsm_on_policy, collapse_to_chain, tv_surrogate
)
from tests.conftest import TOL, one_state_mdp, small_garnet


class TestHausdorff:
    """Test the Hausdorff distance of a cost block"""

    def test_singleton(self):
        assert hausdorff([[0.7]]) == 0.7

    def test_column_block(self):
        assert hausdorff([[1.0], [3.0]]) == 3.0

    def test_zero_block(self):
        assert hausdorff(np.zeros((3, 2))) == 0.0

    def test_zero_diagonal_swap(self):
        """Identical action sets cost nothing even when off-diagonal pairs differ"""
        assert hausdorff([[0.0, 1.0], [1.0, 0.0]]) == 0.0

    def test_empty_block(self):
        with pytest.raises(EmptySet):
            hausdorff(np.zeros((0, 2)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_transpose_symmetric(self, seed):
        block = np.random.default_rng(seed).uniform(size=(3, 4))
        assert hausdorff(block) == hausdorff(block.T)


class TestDeltaCost:
    """Test the pair cost between state-action pairs"""

    def test_zero_metric_equal_rewards(self):
        m = small_garnet(1)
        m = m.replace(rewards=np.full(m.rewards.shape, 0.5))
        cost = delta_cost(m, m, np.zeros((m.num_states, m.num_states)))
        assert np.allclose(cost.delta, 0.0)

    def test_point_mass_transport(self):
        """1-state MDPs: delta = |R1 - R2| + gamma * d"""
        cost = delta_cost(one_state_mdp([1.0]), one_state_mdp([0.0]), np.array([[0.4]]))
        assert cost.delta[0, 0] == pytest.approx(1.0 + 0.5 * 0.4)

    def test_same_mdp_diagonal(self):
        m = small_garnet(2)
        cost = delta_cost(m, m, np.zeros((m.num_states, m.num_states)))
        tensor = cost.as_tensor(m.num_states, m.num_states)
        for s in range(m.num_states):
            assert np.allclose(np.diag(tensor[s, :, s, :]), 0.0)

    def test_block_layout(self):
        m1, m2 = small_garnet(3, num_actions=2), small_garnet(4, num_actions=3)
        cost = delta_cost(m1, m2, np.zeros((m1.num_states, m2.num_states)))
        assert cost.delta.shape == (m1.num_states * 2, m2.num_states * 3)
        assert cost.block(1, 2).shape == (2, 3)
        assert np.allclose(cost.block(1, 2), np.abs(m1.rewards[1][:, None] - m2.rewards[2][None, :]))

    def test_gamma_mismatch(self):
        with pytest.raises(GammaMismatch):
            delta_cost(one_state_mdp([1.0], gamma=0.5), one_state_mdp([1.0], gamma=0.9), np.zeros((1, 1)))

    def test_metric_shape(self):
        with pytest.raises(ShapeMismatch):
            delta_cost(small_garnet(1), small_garnet(2), np.zeros((2, 2)))


class TestGbsm:
    """Test the generalized bisimulation metric between two MDPs"""

    def test_hand_fixed_point(self, fp):
        """d = 1 + 0.5 d solves to 2"""
        d = gbsm(one_state_mdp([1.0]), one_state_mdp([0.0]), fp)
        assert d.at(0, 0) == pytest.approx(2.0, abs=2 * TOL)
        assert d.converged

    def test_zero_rewards(self, fp):
        m1, m2 = small_garnet(1), small_garnet(2, num_states=4, num_actions=3)
        d = gbsm(m1.replace(rewards=np.zeros_like(m1.rewards)), m2.replace(rewards=np.zeros_like(m2.rewards)), fp)
        assert d.dist.shape == (6, 4)
        assert np.all(d.dist == 0.0)

    def test_self_distance(self, fp):
        m = small_garnet(5, gamma=0.9)
        assert d_diag_max(gbsm(m, m, fp)) <= TOL / (1 - m.gamma)

    def test_symmetry(self, fp, garnet_pair):
        m1, m2 = garnet_pair
        assert np.max(np.abs(gbsm(m1, m2, fp).dist - gbsm(m2, m1, fp).dist.T)) <= 2 * TOL

    def test_triangle(self, fp, garnet_triple):
        m1, m2, m3 = garnet_triple
        d12, d13, d32 = gbsm(m1, m2, fp), gbsm(m1, m3, fp), gbsm(m3, m2, fp)
        through = np.min(d13.dist[:, :, None] + d32.dist[None, :, :], axis=1)
        assert np.max(d12.dist - through) <= 3 * TOL

    def test_value_cap(self, fp, garnet_pair):
        m1, m2 = garnet_pair
        d = gbsm(m1, m2, fp)
        assert d.dist.min() >= 0.0
        assert d.dist.max() <= m1.value_cap + TOL

    def test_value_difference(self, fp, garnet_pair):
        """|V1*(s) - V2*(s')| <= d(s, s')"""
        m1, m2 = garnet_pair
        d = gbsm(m1, m2, fp)
        v1 = value_iteration_optimal(m1, TOL).values
        v2 = value_iteration_optimal(m2, TOL).values
        assert np.all(np.abs(v1[:, None] - v2[None, :]) <= d.dist + 5 * TOL / (1 - m1.gamma))

    def test_different_action_counts(self, fp):
        m1, m2 = small_garnet(1, num_actions=2), small_garnet(2, num_actions=4)
        assert gbsm(m1, m2, fp).dist.shape == (6, 6)

    def test_monotone_iterates(self, fp, garnet_pair):
        history = []
        gbsm(*garnet_pair, fp, on_sweep=lambda n, d: history.append(d))
        assert all(np.all(b >= a - 1e-12) for a, b in zip(history, history[1:]))

    def test_geometric_convergence(self):
        """Late iterates approach the fixed point at rate gamma"""
        m1, m2 = small_garnet(31, gamma=0.5), small_garnet(32, gamma=0.5)
        history = []
        final = gbsm(m1, m2, FixedPointConfig(tol=1e-12), on_sweep=lambda n, d: history.append(d))
        errors = [np.max(np.abs(d - final.dist)) for d in history[:-1]]
        late = [e for e in errors if e > 1e-10][-10:]
        for earlier, later in zip(late, late[1:]):
            assert later <= (m1.gamma + 0.02) * earlier

    @pytest.mark.parametrize("seed", range(10))
    def test_residuals_shrink_by_gamma(self, seed):
        """Sweep-to-sweep changes contract by gamma on random pairs"""
        gamma = (0.3, 0.5, 0.7)[seed % 3]
        m1 = small_garnet(100 + 2 * seed, gamma=gamma)
        m2 = small_garnet(101 + 2 * seed, gamma=gamma, num_actions=3)
        tol = 1e-9
        history = [np.zeros((m1.num_states, m2.num_states))]
        gbsm(m1, m2, FixedPointConfig(tol=tol), on_sweep=lambda n, d: history.append(d))
        residuals = [np.max(np.abs(later - earlier)) for earlier, later in zip(history, history[1:])]
        assert len(residuals) >= 2
        for earlier, later in zip(residuals, residuals[1:]):
            assert later <= gamma * earlier + tol

    def test_warm_start_shape(self, fp, garnet_pair):
        with pytest.raises(ShapeMismatch):
            gbsm(*garnet_pair, fp, init=np.zeros((2, 2)))

    def test_budget_exhausted_strict(self):
        m1, m2 = small_garnet(1, gamma=0.9), small_garnet(2, gamma=0.9)
        with pytest.raises(MaxItersExceeded) as exc:
            gbsm(m1, m2, FixedPointConfig(tol=1e-9, max_iters=2))
        assert exc.value.metric.iterations == 2
        assert not exc.value.metric.converged

    def test_budget_exhausted_lenient(self):
        m1, m2 = small_garnet(1, gamma=0.9), small_garnet(2, gamma=0.9)
        d = gbsm(m1, m2, FixedPointConfig(tol=1e-9, max_iters=2, strict=False))
        assert not d.converged
        assert d.iterations == 2

    def test_invalid_config(self):
        with pytest.raises(InvalidParameter):
            FixedPointConfig(tol=0.0)


class TestBsm:
    """Test the single-MDP bisimulation metric"""

    def test_zero_diagonal(self, fp):
        d = bsm(small_garnet(3), fp)
        assert np.all(d.diagonal() == 0.0)

    def test_symmetric(self, fp):
        d = bsm(small_garnet(3), fp)
        assert np.allclose(d.dist, d.dist.T)

    def test_bisimilar_states(self, fp):
        """States with identical rewards and rows are at distance zero"""
        transitions = np.zeros((3, 1, 3))
        transitions[:, 0, 2] = 1.0
        m = Mdp(rewards=np.array([[0.3], [0.3], [0.9]]), transitions=transitions, gamma=0.5)
        d = bsm(m, fp)
        assert d.at(0, 1) == 0.0
        assert d.at(0, 2) == pytest.approx(0.6, abs=2 * TOL)


class TestConferenceGbsm:
    """Test the shared-action GBSM"""

    def test_reduces_to_bsm(self, fp):
        m = small_garnet(4)
        assert np.allclose(gbsm_conference(m, m, fp).dist, bsm(m, fp).dist, atol=2 * TOL)

    def test_hausdorff_is_tighter(self, fp, garnet_pair):
        m1, m2 = garnet_pair
        assert np.all(gbsm(m1, m2, fp).dist <= gbsm_conference(m1, m2, fp).dist + 2 * TOL)

    def test_single_action_matches_gbsm(self, fp):
        m1, m2 = one_state_mdp([1.0]), one_state_mdp([0.0])
        assert gbsm_conference(m1, m2, fp).at(0, 0) == pytest.approx(2.0, abs=2 * TOL)

    def test_action_space_mismatch(self, fp):
        with pytest.raises(ActionSpaceMismatch):
            gbsm_conference(small_garnet(1, num_actions=2), small_garnet(2, num_actions=3), fp)


class TestOnPolicyGbsm:
    """Test the on-policy metric"""

    def test_hand_fixed_point(self, fp):
        """Collapsed rewards 0.7 vs 0.2 with gamma 0.5 give 1.0"""
        m1, m2 = one_state_mdp([[0.4, 1.0]]), one_state_mdp([[0.2, 0.2]])
        d = gbsm_on_policy(m1, m2, Policy.uniform(1, 2), fp)
        assert d.at(0, 0) == pytest.approx(1.0, abs=2 * TOL)

    def test_self_distance(self, fp):
        m = small_garnet(6)
        d = gbsm_on_policy(m, m, Policy.uniform(m.num_states, m.num_actions), fp)
        assert d.diagonal().max() <= TOL / (1 - m.gamma)

    def test_zero_rewards(self, fp, garnet_pair):
        m1, m2 = (m.replace(rewards=np.zeros_like(m.rewards)) for m in garnet_pair)
        d = gbsm_on_policy(m1, m2, Policy.uniform(m1.num_states, m1.num_actions), fp)
        assert np.all(d.dist == 0.0)

    def test_chain_has_one_action(self):
        m = small_garnet(6)
        chain = collapse_to_chain(m, Policy.deterministic(np.zeros(m.num_states, dtype=int)))
        assert chain.num_actions == 1
        assert np.array_equal(chain.transitions[:, 0], m.transitions[:, 0])


class TestTvSurrogate:
    """Test the transport-free surrogate bound"""

    def test_identical(self, garnet_pair):
        m = garnet_pair[0]
        per_state, bound = tv_surrogate(m, m)
        assert bound == 0.0
        assert np.all(per_state == 0.0)

    def test_reward_only_perturbation(self):
        m1, m2 = one_state_mdp([0.5]), one_state_mdp([0.6])
        assert tv_surrogate(m1, m2)[1] == pytest.approx(0.1 / 0.5)

    def test_contains_self_distance(self, fp, garnet_pair):
        m1, m2 = garnet_pair
        assert gbsm(m1, m2, fp).diagonal().max() <= tv_surrogate(m1, m2)[1] + TOL

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            tv_surrogate(small_garnet(1), small_garnet(2, num_states=4))


class TestMetricMatrix:
    """Test the metric container"""

    def test_dict_round_trip(self):
        metric = MetricMatrix(dist=np.arange(6.0).reshape(2, 3), iterations=4, residual=1e-7)
        restored = MetricMatrix.from_dict(metric.to_dict())
        assert np.array_equal(restored.dist, metric.dist)
        assert restored.iterations == 4


def d_diag_max(metric: MetricMatrix) -> float:
    return float(metric.diagonal().max())
