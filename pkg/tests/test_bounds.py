"""
Test suite for bound evaluation
"""

import pytest
import numpy as np
import sys
import os

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.exceptions import InvalidParameter, ShapeMismatch
from core.mdp import Policy, value_iteration_optimal, greedy_policy, solve_policy_value
from core.metrics import gbsm
from core.approximation import AggregationMap, pairwise_aggregation
from core.bounds import (
    BoundReport, StateActionMaps, EstimationVariant, theorem_slack, argmin_state_map,
    transferred_policy, transfer_ground_truth, transfer_bound_general, transfer_bound_identity_action,
    transfer_check, vfa_check, on_policy_vfa_check, ssa_aggregation_check, ssa_estimation_check,
    composite_check, properties_check, sample_complexity_check, practical_check
)
from tests.conftest import TOL, small_garnet


class TestBoundReport:
    """Test the per-trial report"""

    def test_containment_flags(self):
        report = BoundReport.build(3, 0.5, 1.0, {'tight': 0.99, 'loose': 2.0, 'below': 0.5}, slack=0.02)
        assert report.contained == {'tight': True, 'loose': True, 'below': False}
        assert not report.all_contained()

    def test_empirical_bounds_are_exempt(self):
        report = BoundReport.build(0, 0.5, 1.0, {'ok': 1.5, 'guess': 0.1}, slack=0.0, empirical=('guess',))
        assert report.theorem_bounds == ('ok',)
        assert report.all_contained()

    def test_row_layout(self):
        report = BoundReport.build(2, 0.9, 0.3, {'b': 0.4}, slack=1e-5, checks={'order': True},
                                   extras={'iterations': 12})
        row = report.to_row()
        assert list(row)[:3] == ['trial_id', 'gamma', 'ground_truth']
        assert row['contained_b'] is True
        assert row['check_order'] is True
        assert row['iterations'] == 12

    def test_negative_slack(self):
        with pytest.raises(InvalidParameter):
            BoundReport.build(0, 0.5, 0.0, {}, slack=-1.0)

    def test_slack_formula(self):
        assert theorem_slack(0.5, 1e-6) == pytest.approx(1e-5)


class TestStateActionMaps:
    """Test state and action mappings"""

    def test_identity_requires_same_sizes(self):
        with pytest.raises(ShapeMismatch):
            StateActionMaps.identity(small_garnet(1), small_garnet(2, num_states=4))

    def test_validate_range(self):
        m1, m2 = small_garnet(1), small_garnet(2)
        with pytest.raises(ShapeMismatch):
            StateActionMaps(f=np.full(6, 9), g=np.arange(2)).validate(m1, m2)

    def test_transferred_deterministic_policy(self):
        m1, m2 = small_garnet(1), small_garnet(2)
        maps = StateActionMaps(f=np.zeros(6, dtype=int), g=np.array([1, 0]))
        pi = transferred_policy(Policy.deterministic([0, 1, 1, 1, 1, 1]), maps, m1, m2)
        assert np.all(pi.det_actions == 1)

    def test_transferred_stochastic_policy(self):
        m1, m2 = small_garnet(1), small_garnet(2)
        maps = StateActionMaps(f=np.arange(6), g=np.array([1, 1]))
        pi = transferred_policy(Policy.uniform(6, 2), maps, m1, m2)
        assert np.allclose(pi.action_probs[:, 1], 1.0)


class TestPolicyTransfer:
    """Test regret ground truth and transfer bounds"""

    def test_self_transfer_has_no_regret(self, fp):
        m = small_garnet(3)
        assert transfer_ground_truth(m, m, StateActionMaps.identity(m, m), fp) <= 2 * TOL

    def test_flat_target_rewards(self, fp):
        """Every policy is optimal when the target's rewards are constant"""
        m1, m2 = small_garnet(3), small_garnet(4)
        m2 = m2.replace(rewards=np.full(m2.rewards.shape, 0.4))
        assert transfer_ground_truth(m1, m2, StateActionMaps.identity(m1, m2), fp) <= 2 * TOL

    def test_ground_truth_matches_exact_evaluation(self, fp, garnet_pair):
        m1, m2 = garnet_pair
        maps = StateActionMaps.identity(m1, m2)
        pi = greedy_policy(m1, value_iteration_optimal(m1, TOL))
        exact = np.max(np.abs(value_iteration_optimal(m2, TOL).values
                              - solve_policy_value(m2, transferred_policy(pi, maps, m1, m2))))
        assert transfer_ground_truth(m1, m2, maps, fp, source_policy=pi) == pytest.approx(exact, abs=1e-5)

    def test_self_transfer_bound(self, fp):
        m = small_garnet(3)
        bound = transfer_bound_general(m, m, StateActionMaps.identity(m, m), fp)
        assert bound <= theorem_slack(m.gamma, TOL) / (1 - m.gamma)

    def test_argmin_map(self, fp, garnet_pair):
        m1, m2 = garnet_pair
        metric = gbsm(m1, m2, fp)
        f = argmin_state_map(metric)
        assert np.all(metric.dist[f, np.arange(m2.num_states)] == metric.dist.min(axis=0))
        assert transfer_bound_identity_action(m1, m2, f, fp, metric) <= \
            transfer_bound_identity_action(m1, m2, np.arange(m2.num_states), fp, metric) + 1e-12

    def test_check_contains_regret(self, fp, garnet_pair):
        report = transfer_check(*garnet_pair, fp, trial_id=4)
        assert report.trial_id == 4
        assert set(report.bounds) == {'theorem6', 'corollary1', 'corollary1_conf', 'empirical_2maxd'}
        assert report.contained['theorem6']
        assert report.checks['theorem2']
        assert report.checks['hausdorff_tighter']
        assert 'empirical_2maxd' in report.empirical

    def test_greedy_action_map_with_different_action_counts(self, fp):
        m1, m2 = small_garnet(5, num_actions=2), small_garnet(6, num_actions=3)
        report = transfer_check(m1, m2, fp, state_map='argmin', action_map='greedy')
        assert 'corollary1' not in report.bounds
        assert report.contained['theorem6']

    def test_unknown_state_map(self, fp, garnet_pair):
        with pytest.raises(InvalidParameter):
            transfer_check(*garnet_pair, fp, state_map='nearest')


class TestValueApproximation:
    """Test aggregation bounds on value functions"""

    def test_identity_aggregation(self, fp):
        m = small_garnet(7)
        report = vfa_check(m, AggregationMap.identity(m.num_states), fp)
        assert report.ground_truth <= report.slack
        assert all(value <= report.slack for value in report.bounds.values())

    def test_pairwise_aggregation(self, fp):
        m = small_garnet(7)
        report = vfa_check(m, pairwise_aggregation(m.num_states, 0.5, seed=1), fp)
        assert report.all_contained()
        assert report.all_checks_pass()

    def test_on_policy(self, fp):
        m = small_garnet(8)
        pi = Policy.uniform(m.num_states, m.num_actions)
        report = on_policy_vfa_check(m, pairwise_aggregation(m.num_states, 0.5, seed=2), pi, fp)
        assert report.all_contained()
        assert report.all_checks_pass()

    def test_on_policy_identity(self, fp):
        m = small_garnet(8)
        pi = Policy.uniform(m.num_states, m.num_actions)
        report = on_policy_vfa_check(m, AggregationMap.identity(m.num_states), pi, fp)
        assert report.ground_truth <= report.slack
        assert report.bounds['gbsm_pi'] <= report.slack

    def test_on_policy_tv_bound(self, fp):
        """The transport-free chain bound contains both the error and the on-policy metric"""
        m = small_garnet(14)
        pi = Policy.uniform(m.num_states, m.num_actions)
        report = on_policy_vfa_check(m, pairwise_aggregation(m.num_states, 0.5, seed=4), pi, fp)
        assert report.contained['on_policy_tv']
        assert report.checks['gbsm_le_tv']
        assert report.bounds['on_policy_tv'] >= report.bounds['gbsm_pi'] - report.slack

    def test_on_policy_tv_vanishes_without_aggregation(self, fp):
        m = small_garnet(14)
        pi = Policy.uniform(m.num_states, m.num_actions)
        report = on_policy_vfa_check(m, AggregationMap.identity(m.num_states), pi, fp)
        assert report.bounds['on_policy_tv'] == pytest.approx(0.0, abs=1e-12)


class TestStateSimilarityApproximation:
    """Test metric distortion bounds under aggregation and estimation"""

    def test_identity_aggregation(self, fp):
        m = small_garnet(9)
        agg = AggregationMap.identity(m.num_states)
        assert ssa_aggregation_check(m, m, agg, agg, fp).ground_truth <= theorem_slack(m.gamma, TOL)

    def test_single_mdp_aggregation(self, fp):
        m = small_garnet(9)
        agg = pairwise_aggregation(m.num_states, 0.5, seed=3)
        report = ssa_aggregation_check(m, m, agg, agg, fp)
        assert 'bsm_legacy_single' in report.bounds
        assert report.all_contained()
        assert report.all_checks_pass()

    def test_two_mdp_aggregation(self, fp, garnet_pair):
        m1, m2 = garnet_pair
        report = ssa_aggregation_check(m1, m2, pairwise_aggregation(6, 0.5, 1), pairwise_aggregation(6, 0.5, 2), fp)
        assert 'bsm_legacy_single' not in report.bounds
        assert report.contained['gbsm']

    def test_zero_noise(self, fp):
        m = small_garnet(10)
        report = ssa_estimation_check(m, m, EstimationVariant.gaussian(0.0), fp, seed=1)
        assert report.ground_truth <= report.slack

    def test_gaussian_estimation(self, fp):
        m = small_garnet(10)
        report = ssa_estimation_check(m, m, EstimationVariant.gaussian(0.2), fp, seed=5)
        assert report.contained['gbsm']
        assert report.checks['gbsm_le_legacy']
        assert report.extras['noise_std'] == 0.2

    def test_sampled_estimation(self, fp):
        m = small_garnet(10)
        report = ssa_estimation_check(m, m, EstimationVariant.sampled(50), fp, seed=5)
        assert report.contained['gbsm']
        assert report.extras['variant'] == 'sampled'

    def test_invalid_variant(self):
        with pytest.raises(InvalidParameter):
            EstimationVariant(kind='bootstrap')


class TestComposite:
    """Test aggregation combined with estimation"""

    def test_exact_model(self, fp):
        m = small_garnet(11)
        report = composite_check(m, AggregationMap.identity(m.num_states), EstimationVariant.gaussian(0.0), fp)
        assert report.ground_truth <= report.slack
        assert all(value <= 2 * report.slack for value in report.bounds.values())

    def test_decoupled_is_looser(self, fp):
        m = small_garnet(11)
        agg = pairwise_aggregation(m.num_states, 0.5, seed=4)
        report = composite_check(m, agg, EstimationVariant.gaussian(0.1), fp, seed=3)
        assert report.contained['direct']
        assert report.checks['direct_le_decoupled']


class TestProperties:
    """Test the metric property suite"""

    def test_garnet_triple(self, fp, garnet_triple):
        report = properties_check(*garnet_triple, fp, trial_id=1)
        assert report.all_checks_pass()
        assert report.all_contained()
        assert report.extras['symmetry_gap'] <= 2 * TOL


class TestSampleComplexityCheck:
    """Test the realized estimation error at the computed sample count"""

    def test_error_within_epsilon(self, fp):
        m = small_garnet(12, num_states=4, gamma=0.5)
        report = sample_complexity_check(m, epsilon=0.4, alpha=0.1, cfg=fp, seed=1)
        assert report.extras['sample_k'] > 100
        assert report.ground_truth <= 0.4
        assert report.empirical == ('epsilon',)


class TestPracticalCheck:
    """Test the dataset-driven self-consistency trial"""

    def test_self_consistency(self, fp):
        m = small_garnet(13, num_states=4)
        report = practical_check(m, per_pair=3000, eta1=30, cfg=fp, seed=2)
        assert report.contained['diagonal_cap']
        assert report.all_checks_pass()
        assert report.extras['target_states'] == 4
