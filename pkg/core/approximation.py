"""
Approximate MDPs - state aggregation, sampled and perturbed models,
sample-complexity calculators and experience datasets.
"""

import math
import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np
import pandas as pd
import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import PERTURB_MAX_RETRIES
from core.exceptions import InvalidParameter, InvalidAggregation, DegenerateRow
from core.mdp import Mdp, Policy, validate_mdp
from core.metrics import FixedPointConfig, MetricMatrix, gbsm, bsm

logger = logging.getLogger(__name__)

DATASET_COLUMNS = ['s', 'a', 's_next', 'r']


@dataclass(frozen=True, eq=False)
class AggregationMap:
    """
    Representative set U and the surjection [.] : S -> U.

    Attributes:
        representatives: sorted representative states
        assign: assign[s] = [s]
    """
    representatives: np.ndarray
    assign: np.ndarray

    def __post_init__(self):
        reps = np.array(self.representatives, dtype=np.int64, copy=True)
        assign = np.array(self.assign, dtype=np.int64, copy=True)
        reps.setflags(write=False)
        assign.setflags(write=False)
        object.__setattr__(self, 'representatives', reps)
        object.__setattr__(self, 'assign', assign)

    @classmethod
    def identity(cls, num_states: int) -> 'AggregationMap':
        states = np.arange(num_states)
        return cls(representatives=states, assign=states)

    @classmethod
    def from_assign(cls, assign) -> 'AggregationMap':
        assign = np.asarray(assign, dtype=np.int64)
        return cls(representatives=np.unique(assign), assign=assign)

    @property
    def num_states(self) -> int:
        return len(self.assign)

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.assign, np.arange(self.num_states)))

    def validate(self, num_states: int) -> None:
        """Raise InvalidAggregation unless this is a surjection of range(num_states) onto U"""
        if self.assign.shape != (num_states,):
            raise InvalidAggregation(f"assign has {self.assign.size} entries, expected {num_states}")
        if self.representatives.size == 0:
            raise InvalidAggregation("representative set is empty")
        if self.assign.min() < 0 or self.assign.max() >= num_states:
            raise InvalidAggregation("assign targets must be states of the MDP")
        reps = set(self.representatives.tolist())
        if len(reps) != self.representatives.size:
            raise InvalidAggregation("duplicate representatives")
        for u in reps:
            if not 0 <= u < num_states or self.assign[u] != u:
                raise InvalidAggregation(f"representative {u} must map to itself")
        stray = set(self.assign.tolist()) - reps
        if stray:
            raise InvalidAggregation(f"states map outside the representative set: {sorted(stray)}")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Experience tuples (s, a, s_next, r) held in a DataFrame"""
    frame: pd.DataFrame

    def __post_init__(self):
        missing = [c for c in DATASET_COLUMNS if c not in self.frame.columns]
        if missing:
            raise InvalidParameter(f"dataset is missing columns {missing}")
        frame = self.frame[DATASET_COLUMNS].astype({'s': 'int64', 'a': 'int64', 's_next': 'int64', 'r': 'float64'})
        object.__setattr__(self, 'frame', frame.reset_index(drop=True))

    @classmethod
    def from_tuples(cls, tuples: Iterable[Tuple[int, int, int, float]]) -> 'Dataset':
        return cls(pd.DataFrame(list(tuples), columns=DATASET_COLUMNS))

    @classmethod
    def empty(cls) -> 'Dataset':
        return cls(pd.DataFrame({c: pd.Series(dtype='int64' if c != 'r' else 'float64') for c in DATASET_COLUMNS}))

    def __len__(self) -> int:
        return len(self.frame)

    def validate(self, num_states: int, num_actions: int, reward_max: float) -> None:
        """Raise InvalidParameter if an index or reward is out of range"""
        df = self.frame
        if len(df) == 0:
            return
        if df['s'].min() < 0 or df['s'].max() >= num_states \
                or df['s_next'].min() < 0 or df['s_next'].max() >= num_states:
            raise InvalidParameter(f"state indices must lie in [0, {num_states})")
        if df['a'].min() < 0 or df['a'].max() >= num_actions:
            raise InvalidParameter(f"action indices must lie in [0, {num_actions})")
        if df['r'].min() < 0 or df['r'].max() > reward_max:
            raise InvalidParameter(f"rewards must lie in [0, {reward_max}]")


# ---- Aggregation ----

def pairwise_aggregation(num_states: int, fraction: float, seed) -> AggregationMap:
    """
    Random pairwise aggregation.

    States are shuffled by seed and paired consecutively; round(fraction * |S|)
    pairs (at most |S| // 2) are formed and the second state of each pair is
    replaced by the first.
    """
    if num_states < 1:
        raise InvalidParameter("num_states must be positive")
    if not 0.0 < fraction <= 1.0:
        raise InvalidParameter(f"aggregation fraction {fraction!r} must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    order = rng.permutation(num_states)
    num_pairs = min(int(round(fraction * num_states)), num_states // 2)

    assign = np.arange(num_states)
    for i in range(num_pairs):
        rep, member = order[2 * i], order[2 * i + 1]
        assign[member] = rep
    return AggregationMap.from_assign(assign)


def build_aggregated_mdp(m: Mdp, agg: AggregationMap) -> Mdp:
    """
    Aggregated MDP M_[1] on the same index set.

    R(s,a) := R([s],a) and [P](s'|s,a) sums P(s''|[s],a) over all s'' with
    [s''] = s', so every row puts its mass on representatives only.

    Args:
        m: source MDP
        agg: aggregation valid for m

    Returns:
        Aggregated Mdp (bit-identical to m under the identity aggregation)
    """
    agg.validate(m.num_states)
    if agg.is_identity():
        return m.replace()

    lumping = np.zeros((m.num_states, m.num_states))
    lumping[np.arange(m.num_states), agg.assign] = 1.0
    rows = m.transitions[agg.assign]
    transitions = rows @ lumping
    rewards = m.rewards[agg.assign]
    return m.replace(rewards=rewards, transitions=transitions)


def lift_policy(pi: Policy, agg: AggregationMap) -> Policy:
    """Policy acting at s as pi acts at [s]"""
    if pi.kind == 'deterministic':
        return Policy.deterministic(pi.det_actions[agg.assign])
    return Policy.stochastic(pi.action_probs[agg.assign])


def sigma_from_metric(metric: MetricMatrix, agg: AggregationMap) -> float:
    """max_s d(s, [s])"""
    states = np.arange(agg.num_states)
    return float(metric.dist[states, agg.assign].max())


def aggregation_sigmas(m: Mdp, agg: AggregationMap, cfg: Optional[FixedPointConfig] = None,
                       bsm_metric: Optional[MetricMatrix] = None) -> Tuple[float, float]:
    """
    Aggregation distortion of m under agg.

    Args:
        m: source MDP
        agg: aggregation valid for m
        cfg: stopping rule for both metrics
        bsm_metric: precomputed bsm(m), reused when given

    Returns:
        (sigma, sigma_tilde) with sigma = max_s d^{1-[1]}(s,[s]) and
        sigma_tilde = max_s d~(s,[s])
    """
    cfg = cfg or FixedPointConfig()
    aggregated = build_aggregated_mdp(m, agg)
    sigma = sigma_from_metric(gbsm(m, aggregated, cfg), agg)
    if bsm_metric is None:
        bsm_metric = bsm(m, cfg)
    return sigma, sigma_from_metric(bsm_metric, agg)


# ---- Estimated models ----

def build_empirical_mdp(m: Mdp, k: int, seed) -> Mdp:
    """
    Empirical MDP from k i.i.d. successor draws per (s, a).

    Rewards are copied; each row is the frequency vector of its draws.
    """
    if k < 1:
        raise InvalidParameter(f"sample count k must be at least 1, got {k!r}")
    rng = np.random.default_rng(seed)
    transitions = np.zeros_like(m.transitions)
    for s in range(m.num_states):
        for a in range(m.num_actions):
            row = m.transitions[s, a]
            counts = rng.multinomial(k, row / row.sum())
            transitions[s, a] = counts / k
    return m.replace(transitions=transitions)


def perturb_mdp_gaussian(m: Mdp, std: float, seed) -> Mdp:
    """
    Add Gaussian noise to the positive transition probabilities.

    Noisy rows are clamped at zero and renormalized. A row that clamps to all
    zeros is redrawn, up to PERTURB_MAX_RETRIES times.

    Args:
        m: source MDP
        std: noise standard deviation (0 returns an unchanged copy)
        seed: RNG seed

    Returns:
        Perturbed Mdp with the same rewards and row supports within the original support
    """
    if std < 0 or not math.isfinite(std):
        raise InvalidParameter(f"noise std must be nonnegative, got {std!r}")
    if std == 0:
        return m.replace()

    rng = np.random.default_rng(seed)
    transitions = np.zeros_like(m.transitions)
    for s in range(m.num_states):
        for a in range(m.num_actions):
            row = m.transitions[s, a]
            support = row > 0
            for _ in range(PERTURB_MAX_RETRIES):
                noisy = row.copy()
                noisy[support] += rng.normal(0.0, std, size=int(support.sum()))
                noisy = np.clip(noisy, 0.0, None)
                total = noisy.sum()
                if total > 0:
                    transitions[s, a] = noisy / total
                    break
            else:
                raise DegenerateRow(s, a, PERTURB_MAX_RETRIES)
    return m.replace(transitions=transitions)


# ---- Sample complexity ----

def _check_complexity_args(epsilon, alpha, gamma, reward_max, num_states) -> None:
    if not epsilon > 0:
        raise InvalidParameter(f"epsilon must be positive, got {epsilon!r}")
    if not 0.0 < alpha < 1.0:
        raise InvalidParameter(f"alpha must lie in (0, 1), got {alpha!r}")
    if not 0.0 <= gamma < 1.0:
        raise InvalidParameter(f"gamma must lie in [0, 1), got {gamma!r}")
    if reward_max < 0 or num_states < 1:
        raise InvalidParameter("reward_max must be nonnegative and num_states positive")


def sample_complexity_ssa(epsilon: float, alpha: float, gamma: float,
                          reward_max: float, num_states: int) -> float:
    """
    Per-(s,a) samples K such that the estimation error of the metric is at
    most epsilon with probability at least 1 - alpha.

    K = -ln(alpha/2) gamma^2 R_max^2 |S|^2 / (2 epsilon^2 (1-gamma)^4)
    """
    _check_complexity_args(epsilon, alpha, gamma, reward_max, num_states)
    numerator = -math.log(alpha / 2.0) * gamma ** 2 * reward_max ** 2 * num_states ** 2
    return numerator / (2.0 * epsilon ** 2 * (1.0 - gamma) ** 4)


def sample_complexity_model_based_rl(epsilon: float, alpha: float, gamma: float,
                                     reward_max: float, num_states: int) -> float:
    """SSA sample complexity with epsilon replaced by epsilon (1 - gamma)"""
    _check_complexity_args(epsilon, alpha, gamma, reward_max, num_states)
    return sample_complexity_ssa(epsilon * (1.0 - gamma), alpha, gamma, reward_max, num_states)


# ---- Datasets ----

def sample_dataset(m: Mdp, per_pair: int, seed) -> Dataset:
    """
    Draw exactly `per_pair` experience tuples for every (s, a) of a known MDP.

    Rewards are the deterministic R(s, a).
    """
    if per_pair < 0:
        raise InvalidParameter("per_pair must be nonnegative")
    validate_mdp(m)
    rng = np.random.default_rng(seed)
    states, actions, successors, rewards = [], [], [], []
    for s in range(m.num_states):
        for a in range(m.num_actions):
            row = m.transitions[s, a]
            draws = rng.choice(m.num_states, size=per_pair, p=row / row.sum())
            states.append(np.full(per_pair, s))
            actions.append(np.full(per_pair, a))
            successors.append(draws)
            rewards.append(np.full(per_pair, m.rewards[s, a]))

    frame = pd.DataFrame({
        's': np.concatenate(states),
        'a': np.concatenate(actions),
        's_next': np.concatenate(successors),
        'r': np.concatenate(rewards),
    })
    logger.debug(f"Sampled {len(frame)} tuples ({per_pair} per state-action pair)")
    return Dataset(frame)
