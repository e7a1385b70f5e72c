"""
Test suite for aggregation, estimated models and sample complexity
"""

import pytest
import numpy as np
import pandas as pd
import sys
import os

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.exceptions import InvalidAggregation, InvalidParameter
from core.mdp import Policy, validate_mdp
from core.approximation import (
    AggregationMap, Dataset, pairwise_aggregation, build_aggregated_mdp, lift_policy,
    aggregation_sigmas, build_empirical_mdp, perturb_mdp_gaussian, sample_complexity_ssa,
    sample_complexity_model_based_rl, sample_dataset
)
from core.transport import total_variation
from tests.conftest import TOL, small_garnet


class TestAggregationMap:
    """Test representative-set validation"""

    def test_identity(self):
        agg = AggregationMap.identity(5)
        agg.validate(5)
        assert agg.is_identity()

    def test_representative_must_map_to_itself(self):
        agg = AggregationMap(representatives=[1], assign=[1, 0])
        with pytest.raises(InvalidAggregation):
            agg.validate(2)

    def test_wrong_length(self):
        with pytest.raises(InvalidAggregation):
            AggregationMap.identity(3).validate(4)

    def test_pairwise_half(self):
        """Half of 20 states are replaced by a representative"""
        agg = pairwise_aggregation(20, 0.5, seed=3)
        agg.validate(20)
        assert len(agg.representatives) == 10

    def test_pairwise_deterministic(self):
        assert np.array_equal(pairwise_aggregation(10, 0.5, 7).assign, pairwise_aggregation(10, 0.5, 7).assign)

    def test_pairwise_invalid_fraction(self):
        with pytest.raises(InvalidParameter):
            pairwise_aggregation(10, 0.0, 1)


class TestAggregatedMdp:
    """Test construction of the aggregated MDP"""

    def test_identity_is_bit_exact(self):
        m = small_garnet(1)
        assert build_aggregated_mdp(m, AggregationMap.identity(m.num_states)).same_as(m)

    def test_single_representative(self):
        """Mapping every state to u gives point masses on u"""
        m = small_garnet(2)
        agg = AggregationMap.from_assign(np.full(m.num_states, 3))
        aggregated = build_aggregated_mdp(m, agg)
        assert np.allclose(aggregated.transitions[:, :, 3], 1.0)
        assert np.allclose(aggregated.rewards, m.rewards[[3] * m.num_states])

    def test_support_on_representatives(self):
        m = small_garnet(3, num_states=20)
        agg = pairwise_aggregation(20, 0.5, seed=4)
        aggregated = build_aggregated_mdp(m, agg)
        validate_mdp(aggregated)
        outside = np.setdiff1d(np.arange(20), agg.representatives)
        assert np.all(aggregated.transitions[:, :, outside] == 0.0)

    def test_lifted_policy(self):
        agg = AggregationMap.from_assign([0, 0, 2, 2])
        lifted = lift_policy(Policy.deterministic([1, 0, 0, 1]), agg)
        assert list(lifted.det_actions) == [1, 1, 0, 0]

    def test_identity_sigmas(self, fp):
        m = small_garnet(5)
        sigma, sigma_tilde = aggregation_sigmas(m, AggregationMap.identity(m.num_states), fp)
        assert sigma <= TOL / (1 - m.gamma)
        assert sigma_tilde <= TOL / (1 - m.gamma)


class TestEstimatedMdp:
    """Test sampled and noise-perturbed models"""

    def test_point_mass_rows(self):
        m = small_garnet(1, num_states=4, branching=0.25)
        assert np.array_equal(build_empirical_mdp(m, 3, seed=0).transitions, m.transitions)

    def test_same_seed(self):
        m = small_garnet(2)
        assert build_empirical_mdp(m, 50, seed=9).same_as(build_empirical_mdp(m, 50, seed=9))

    def test_large_k_recovers_row(self):
        m = small_garnet(3, num_states=3, branching=1.0)
        estimate = build_empirical_mdp(m, 100000, seed=1)
        assert total_variation(estimate.transitions[0, 0], m.transitions[0, 0]) <= 0.02

    def test_invalid_k(self):
        with pytest.raises(InvalidParameter):
            build_empirical_mdp(small_garnet(1), 0, seed=0)

    def test_zero_noise(self):
        m = small_garnet(4)
        assert perturb_mdp_gaussian(m, 0.0, seed=1).same_as(m)

    def test_noise_keeps_support(self):
        m = small_garnet(4)
        noisy = perturb_mdp_gaussian(m, 0.3, seed=1)
        validate_mdp(noisy)
        assert np.all(noisy.transitions[m.transitions == 0] == 0.0)
        assert np.array_equal(noisy.rewards, m.rewards)

    def test_distinct_seeds(self):
        m = small_garnet(4)
        assert not perturb_mdp_gaussian(m, 0.1, seed=1).same_as(perturb_mdp_gaussian(m, 0.1, seed=2))

    def test_negative_std(self):
        with pytest.raises(InvalidParameter):
            perturb_mdp_gaussian(small_garnet(4), -0.1, seed=1)


class TestSampleComplexity:
    """Test the closed-form sample counts"""

    def test_reference_value(self):
        assert sample_complexity_ssa(0.1, 0.05, 0.9, 1.0, 20) == pytest.approx(5.977e8, rel=1e-3)

    def test_gamma_zero(self):
        assert sample_complexity_ssa(0.1, 0.05, 0.0, 1.0, 20) == 0.0
        assert sample_complexity_model_based_rl(0.1, 0.05, 0.0, 1.0, 20) == 0.0

    def test_model_based_rl(self):
        value = sample_complexity_model_based_rl(0.5, 0.05, 0.5, 1.0, 10)
        assert value == pytest.approx(sample_complexity_ssa(0.25, 0.05, 0.5, 1.0, 10))
        assert value == pytest.approx(1.1805e4, rel=1e-3)

    @pytest.mark.parametrize("args", [
        (0.0, 0.1, 0.5, 1.0, 4),
        (0.1, 1.0, 0.5, 1.0, 4),
        (0.1, 0.1, 1.0, 1.0, 4),
        (0.1, 0.1, 0.5, 1.0, 0),
    ])
    def test_invalid_arguments(self, args):
        with pytest.raises(InvalidParameter):
            sample_complexity_ssa(*args)


class TestDataset:
    """Test experience datasets"""

    def test_sample_counts(self):
        m = small_garnet(6, num_states=4)
        data = sample_dataset(m, 25, seed=2)
        assert len(data) == 4 * 2 * 25
        assert np.all(data.frame.groupby(['s', 'a']).size() == 25)
        data.validate(m.num_states, m.num_actions, m.reward_max)

    def test_successors_in_support(self):
        m = small_garnet(6, num_states=4)
        df = sample_dataset(m, 40, seed=2).frame
        assert np.all(m.transitions[df['s'].to_numpy(), df['a'].to_numpy(), df['s_next'].to_numpy()] > 0)

    def test_validate_action_range(self):
        data = Dataset.from_tuples([(0, 3, 1, 0.5)])
        with pytest.raises(InvalidParameter):
            data.validate(2, 2, 1.0)

    def test_missing_column(self):
        with pytest.raises(InvalidParameter):
            Dataset(pd.DataFrame({'s': [0], 'a': [0]}))
