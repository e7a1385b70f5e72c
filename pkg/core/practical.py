"""
Dataset-driven GBSM

Computes the metric between a dataset-only target MDP and a fully known
source MDP in three stages:
1. representative target states and their empirical model
2. closure of the source state set under reachability
3. warm-started fixed-point iteration on the two restricted models
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import pandas as pd
import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import PRACTICAL_ETA1, DEFAULT_TOL
from core.exceptions import InvalidParameter, EmptyRepresentativeSet, UncoveredStateAction
from core.mdp import Mdp, validate_mdp
from core.metrics import FixedPointConfig, MetricMatrix, gbsm
from core.approximation import Dataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PracticalConfig:
    """
    Attributes:
        eta1: minimum number of samples for every action of a representative state
        eta2: convergence threshold of the metric iteration
        max_iters: sweep budget (None derives it from eta2)
    """
    eta1: int = PRACTICAL_ETA1
    eta2: float = DEFAULT_TOL
    max_iters: Optional[int] = None

    def __post_init__(self):
        if self.eta1 < 1:
            raise InvalidParameter(f"eta1 must be at least 1, got {self.eta1!r}")
        if not self.eta2 > 0:
            raise InvalidParameter(f"eta2 must be positive, got {self.eta2!r}")

    def fixed_point(self) -> FixedPointConfig:
        return FixedPointConfig(tol=self.eta2, max_iters=self.max_iters)


@dataclass(frozen=True, eq=False)
class RestrictedMdp:
    """Sub-MDP over an ordered state set; transitions are indexed by position in `states`"""
    states: np.ndarray
    rewards: np.ndarray
    transitions: np.ndarray

    @property
    def size(self) -> int:
        return len(self.states)

    def is_closed(self, atol: float = 1e-9) -> bool:
        """Every row keeps all of its mass inside `states`"""
        return bool(np.allclose(self.transitions.sum(axis=2), 1.0, rtol=0, atol=atol))

    def as_mdp(self, gamma: float, reward_max: float) -> Mdp:
        return Mdp(rewards=self.rewards, transitions=self.transitions, gamma=gamma, reward_max=reward_max)


@dataclass(frozen=True, eq=False)
class PracticalResult:
    """Metric over target rows x source columns with the original state ids of both axes"""
    metric: MetricMatrix
    target_states: np.ndarray
    source_states: np.ndarray
    report: dict = field(default_factory=dict)

    def matched_diagonal(self) -> np.ndarray:
        """d(s, s) for every state id present on both axes"""
        columns = {int(s): j for j, s in enumerate(self.source_states)}
        values = [self.metric.dist[i, columns[int(s)]]
                  for i, s in enumerate(self.target_states) if int(s) in columns]
        return np.asarray(values, dtype=float)


# ---- Stage 1 ----

def build_representative_set(data: Dataset, num_states: int, num_actions: int,
                             cfg: Optional[PracticalConfig] = None) -> Tuple[np.ndarray, Dataset]:
    """
    Representative target states and the tuples that stay inside them.

    A state is representative only if every action has at least eta1 samples.

    Args:
        data: experience tuples
        num_states: size of the target state space
        num_actions: size of the shared action space
        cfg: thresholds

    Returns:
        (u_t, filtered): sorted representative states and the tuples with both
        s and s_next in u_t

    Raises:
        EmptyRepresentativeSet: if no state qualifies
    """
    cfg = cfg or PracticalConfig()
    data.validate(num_states, num_actions, np.inf)
    df = data.frame
    if len(df) == 0:
        raise EmptyRepresentativeSet("dataset is empty")

    counts = (
        df.groupby(['s', 'a']).size()
        .unstack(fill_value=0)
        .reindex(index=range(num_states), columns=range(num_actions), fill_value=0)
    )
    qualifying = counts.index[(counts >= cfg.eta1).all(axis=1)]
    u_t = np.asarray(sorted(int(s) for s in qualifying), dtype=np.int64)
    if u_t.size == 0:
        raise EmptyRepresentativeSet(f"no state has {cfg.eta1} samples for every action")

    inside = df['s'].isin(u_t) & df['s_next'].isin(u_t)
    filtered = Dataset(df[inside])
    logger.debug(f"Stage 1: {u_t.size} representative states, kept {len(filtered)} of {len(df)} tuples")
    return u_t, filtered


def dropped_mass(data: Dataset, u_t: np.ndarray) -> pd.Series:
    """Share of each representative pair's tuples discarded because s_next left u_t"""
    df = data.frame[data.frame['s'].isin(u_t)]
    if len(df) == 0:
        return pd.Series(dtype=float)
    outside = ~df['s_next'].isin(u_t)
    return outside.groupby([df['s'], df['a']]).mean()


def estimate_target_model(filtered: Dataset, u_t, num_actions: int) -> RestrictedMdp:
    """
    Empirical transition frequencies and mean rewards over u_t.

    Raises:
        UncoveredStateAction: if a representative pair has no tuples left
    """
    u_t = np.asarray(u_t, dtype=np.int64)
    position = {int(s): i for i, s in enumerate(u_t)}
    df = filtered.frame

    counts = np.zeros((len(u_t), num_actions, len(u_t)))
    grouped = df.groupby(['s', 'a', 's_next']).size()
    for (s, a, s_next), n in grouped.items():
        counts[position[int(s)], int(a), position[int(s_next)]] = n

    totals = counts.sum(axis=2)
    uncovered = np.argwhere(totals == 0)
    if len(uncovered):
        i, a = (int(x) for x in uncovered[0])
        raise UncoveredStateAction(int(u_t[i]), a)

    rewards = np.zeros((len(u_t), num_actions))
    for (s, a), r in df.groupby(['s', 'a'])['r'].mean().items():
        rewards[position[int(s)], int(a)] = r

    return RestrictedMdp(states=u_t, rewards=rewards, transitions=counts / totals[:, :, None])


# ---- Stage 2 ----

def close_source_space(m_s: Mdp, seed_set) -> RestrictedMdp:
    """
    Smallest superset of seed_set closed under positive-probability transitions.

    States keep the order in which they were appended: seeds first, then
    newly reached states in breadth-first order.
    """
    seeds = [int(s) for s in seed_set]
    if any(not 0 <= s < m_s.num_states for s in seeds):
        raise InvalidParameter(f"seed states must lie in [0, {m_s.num_states})")

    reachable = (m_s.transitions > 0).any(axis=1)
    order, seen = [], set()
    for s in seeds:
        if s not in seen:
            seen.add(s)
            order.append(s)
    queue = deque(order)
    while queue:
        u = queue.popleft()
        for s in np.flatnonzero(reachable[u]):
            s = int(s)
            if s not in seen:
                seen.add(s)
                order.append(s)
                queue.append(s)

    states = np.asarray(order, dtype=np.int64)
    return RestrictedMdp(
        states=states,
        rewards=m_s.rewards[states].copy(),
        transitions=m_s.transitions[np.ix_(states, np.arange(m_s.num_actions), states)].copy(),
    )


# ---- Stage 3 ----

def compute_gbsm_practical(data: Dataset, m_s: Mdp, cfg: Optional[PracticalConfig] = None) -> PracticalResult:
    """
    GBSM between the target behind `data` (rows) and the source m_s (columns).

    Args:
        data: target experience tuples, action indices shared with m_s
        m_s: fully known source MDP; its gamma is used
        cfg: eta1 / eta2 thresholds

    Returns:
        PracticalResult with the |u_t| x |u_s| metric and a stage report
    """
    cfg = cfg or PracticalConfig()
    validate_mdp(m_s)
    df = data.frame
    num_states = int(max(df['s'].max(), df['s_next'].max())) + 1 if len(df) else m_s.num_states
    num_states = max(num_states, m_s.num_states)

    u_t, filtered = build_representative_set(data, num_states, m_s.num_actions, cfg)
    lost = dropped_mass(data, u_t)
    if len(lost) and lost.max() > 0:
        logger.warning(f"Stage 1 discarded up to {lost.max():.2%} of a pair's tuples (successors outside U_t)")
    target = estimate_target_model(filtered, u_t, m_s.num_actions)
    source = close_source_space(m_s, u_t[u_t < m_s.num_states])
    logger.info(f"Representative sets: |U_t| = {target.size}, |U_s| = {source.size}")

    reward_max = max(m_s.reward_max, float(df['r'].max()))
    target_mdp = target.as_mdp(m_s.gamma, reward_max)
    source_mdp = source.as_mdp(m_s.gamma, reward_max)

    init = np.abs(target.rewards[:, None, :] - source.rewards[None, :, :]).max(axis=2)
    metric = gbsm(target_mdp, source_mdp, cfg.fixed_point(), init=init)

    report = {
        'target_states': int(target.size),
        'source_states': int(source.size),
        'dropped_tuples': int(len(data) - len(filtered)),
        'max_dropped_mass': float(lost.max()) if len(lost) else 0.0,
        'dropped_mass': {f'{int(s)},{int(a)}': float(v) for (s, a), v in lost.items()},
        'iterations': int(metric.iterations),
        'residual': float(metric.residual),
    }
    return PracticalResult(metric=metric, target_states=target.states, source_states=source.states, report=report)
