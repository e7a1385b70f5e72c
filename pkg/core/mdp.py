"""Finite MDP model - Garnet generation, value iteration and policy evaluation"""

import math
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import (
    DEFAULT_TOL, STOCHASTIC_ATOL, VALUE_RANGE_ATOL, GARNET_STATES, GARNET_ACTIONS,
    GARNET_BRANCHING, GARNET_GAMMA, GARNET_REWARD_MAX
)
from core.exceptions import (
    InvalidParameter, NonStochasticRow, RewardOutOfRange, InvalidGamma, ShapeMismatch
)

logger = logging.getLogger(__name__)


def _frozen(array, dtype=float) -> np.ndarray:
    arr = np.array(array, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Mdp:
    """
    Finite MDP <S, A, P, R, gamma> with reward scale R_max.

    Attributes:
        rewards: |S| x |A| matrix, R(s, a)
        transitions: |S| x |A| x |S| tensor, P(s' | s, a)
        gamma: discount factor in [0, 1)
        reward_max: reward scale, rewards lie in [0, reward_max]
    """
    rewards: np.ndarray
    transitions: np.ndarray
    gamma: float
    reward_max: float = GARNET_REWARD_MAX

    def __post_init__(self):
        rewards = _frozen(self.rewards)
        transitions = _frozen(self.transitions)
        if rewards.ndim != 2 or transitions.ndim != 3:
            raise ShapeMismatch(
                f"rewards must be 2-D and transitions 3-D, got {rewards.shape} and {transitions.shape}"
            )
        num_states, num_actions = rewards.shape
        if transitions.shape != (num_states, num_actions, num_states):
            raise ShapeMismatch(
                f"transitions shape {transitions.shape} does not match rewards shape {rewards.shape}"
            )
        if num_states < 1 or num_actions < 1:
            raise ShapeMismatch("an MDP needs at least one state and one action")
        object.__setattr__(self, 'rewards', rewards)
        object.__setattr__(self, 'transitions', transitions)
        object.__setattr__(self, 'gamma', float(self.gamma))
        object.__setattr__(self, 'reward_max', float(self.reward_max))

    @property
    def num_states(self) -> int:
        return self.rewards.shape[0]

    @property
    def num_actions(self) -> int:
        return self.rewards.shape[1]

    @property
    def value_cap(self) -> float:
        """Largest attainable value, R_max / (1 - gamma)"""
        return self.reward_max / (1.0 - self.gamma)

    def same_as(self, other: 'Mdp') -> bool:
        """Bit-exact equality of every field"""
        return (
            self.gamma == other.gamma
            and self.reward_max == other.reward_max
            and np.array_equal(self.rewards, other.rewards)
            and np.array_equal(self.transitions, other.transitions)
        )

    def replace(self, rewards=None, transitions=None) -> 'Mdp':
        return Mdp(
            rewards=self.rewards if rewards is None else rewards,
            transitions=self.transitions if transitions is None else transitions,
            gamma=self.gamma,
            reward_max=self.reward_max,
        )


@dataclass(frozen=True, eq=False)
class Policy:
    """Deterministic (one action per state) or stochastic (pi(a|s) matrix) policy"""
    kind: str
    det_actions: Optional[np.ndarray] = None
    action_probs: Optional[np.ndarray] = None

    @classmethod
    def deterministic(cls, actions) -> 'Policy':
        return cls(kind='deterministic', det_actions=_frozen(actions, dtype=np.int64))

    @classmethod
    def stochastic(cls, probs) -> 'Policy':
        return cls(kind='stochastic', action_probs=_frozen(probs))

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> 'Policy':
        return cls.stochastic(np.full((num_states, num_actions), 1.0 / num_actions))

    @property
    def num_states(self) -> int:
        if self.kind == 'deterministic':
            return len(self.det_actions)
        return self.action_probs.shape[0]

    def check(self, num_states: int, num_actions: int) -> None:
        """Raise ShapeMismatch / InvalidParameter unless the policy fits an MDP of this size"""
        if self.kind == 'deterministic':
            actions = self.det_actions
            if actions is None or actions.ndim != 1 or len(actions) != num_states:
                raise ShapeMismatch(f"deterministic policy must have {num_states} entries")
            if actions.size and (actions.min() < 0 or actions.max() >= num_actions):
                raise ShapeMismatch(f"policy actions must lie in [0, {num_actions})")
        elif self.kind == 'stochastic':
            probs = self.action_probs
            if probs is None or probs.shape != (num_states, num_actions):
                raise ShapeMismatch(
                    f"stochastic policy must be {num_states}x{num_actions}, got "
                    f"{None if probs is None else probs.shape}"
                )
            if (probs < 0).any() or not np.allclose(probs.sum(axis=1), 1.0, rtol=0, atol=STOCHASTIC_ATOL):
                raise InvalidParameter("stochastic policy rows must be nonnegative and sum to 1")
        else:
            raise InvalidParameter(f"unknown policy kind {self.kind!r}")

    def as_matrix(self, num_actions: int) -> np.ndarray:
        """Return pi(a|s) as an |S| x |A| matrix"""
        if self.kind == 'deterministic':
            probs = np.zeros((len(self.det_actions), num_actions))
            probs[np.arange(len(self.det_actions)), self.det_actions] = 1.0
            return probs
        return np.array(self.action_probs, dtype=float)


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """State values in [0, cap] together with the number of sweeps used to compute them"""
    values: np.ndarray
    iterations: int = 0
    cap: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, 'values', _frozen(self.values))
        if self.values.size == 0:
            return
        margin = VALUE_RANGE_ATOL * max(1.0, self.cap if math.isfinite(self.cap) else 1.0)
        if self.values.min() < -margin or self.values.max() > self.cap + margin:
            raise InvalidParameter(
                f"values must lie in [0, {self.cap:g}], got [{self.values.min():g}, {self.values.max():g}]"
            )

    def sup_gap(self, other: 'ValueFunction') -> float:
        return float(np.max(np.abs(self.values - other.values)))


@dataclass(frozen=True)
class GarnetConfig:
    """Parameters of a random Garnet MDP"""
    num_states: int = GARNET_STATES
    num_actions: int = GARNET_ACTIONS
    branching_fraction: float = GARNET_BRANCHING
    gamma: float = GARNET_GAMMA
    reward_max: float = GARNET_REWARD_MAX
    seed: int = 0

    def __post_init__(self):
        if self.num_states < 1 or self.num_actions < 1:
            raise InvalidParameter("Garnet MDPs need at least one state and one action")
        if not 0.0 < self.branching_fraction <= 1.0:
            raise InvalidParameter(f"branching_fraction {self.branching_fraction!r} must lie in (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidGamma(self.gamma)
        if self.reward_max <= 0:
            raise InvalidParameter("reward_max must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidParameter("seed must be a 64-bit unsigned integer")

    @property
    def branches(self) -> int:
        # the small epsilon keeps e.g. 0.3 * 10 from rounding up to 4
        return max(1, min(self.num_states, math.ceil(self.branching_fraction * self.num_states - 1e-9)))


def validate_mdp(m: Mdp) -> None:
    """
    Check every MDP invariant.

    Args:
        m: MDP to validate

    Raises:
        InvalidGamma, RewardOutOfRange, NonStochasticRow naming the offending index
    """
    if not 0.0 <= m.gamma < 1.0 or not math.isfinite(m.gamma):
        raise InvalidGamma(m.gamma)

    bad = np.argwhere(~((m.rewards >= 0.0) & (m.rewards <= m.reward_max)))
    if len(bad):
        s, a = (int(x) for x in bad[0])
        raise RewardOutOfRange(s, a, float(m.rewards[s, a]), m.reward_max)

    negative = np.argwhere(~(m.transitions >= 0.0).all(axis=2))
    if len(negative):
        s, a = (int(x) for x in negative[0])
        raise NonStochasticRow(s, a, float(m.transitions[s, a].sum()), reason='negative')

    sums = m.transitions.sum(axis=2)
    off = np.argwhere(~(np.abs(sums - 1.0) <= STOCHASTIC_ATOL))
    if len(off):
        s, a = (int(x) for x in off[0])
        raise NonStochasticRow(s, a, float(sums[s, a]))


def garnet_generate(cfg: GarnetConfig) -> Mdp:
    """
    Generate a random Garnet MDP.

    Each (s, a) gets exactly `cfg.branches` successors drawn without replacement;
    their probabilities are independent uniform draws normalized to one.
    Rewards are uniform on [0, R_max]. Identical configs give identical MDPs.

    Args:
        cfg: Garnet parameters including the RNG seed

    Returns:
        A valid Mdp
    """
    rng = np.random.default_rng(int(cfg.seed))
    n, k, b = cfg.num_states, cfg.num_actions, cfg.branches

    transitions = np.zeros((n, k, n))
    for s in range(n):
        for a in range(k):
            successors = rng.choice(n, size=b, replace=False)
            weights = 1.0 - rng.random(b)  # (0, 1], never exactly zero
            transitions[s, a, successors] = weights / weights.sum()

    rewards = rng.uniform(0.0, cfg.reward_max, size=(n, k))
    return Mdp(rewards=rewards, transitions=transitions, gamma=cfg.gamma, reward_max=cfg.reward_max)


def contraction_sweeps(gamma: float, scale: float, tol: float) -> int:
    """
    Smallest n with gamma^n * scale / (1 - gamma) <= tol.

    Args:
        gamma: contraction factor in [0, 1)
        scale: bound on one-step quantities (R_max)
        tol: target accuracy

    Returns:
        Number of sweeps (at least 1)
    """
    if tol <= 0:
        raise InvalidParameter("tol must be positive")
    if gamma == 0.0 or scale <= 0.0:
        return 1
    target = tol * (1.0 - gamma) / scale
    if target >= 1.0:
        return 1
    return max(1, math.ceil(math.log(target) / math.log(gamma)))


def _bellman_loop(step, num_states: int, gamma: float, scale: float, tol: float) -> ValueFunction:
    """Iterate v <- step(v) from zero until the sup-norm error is at most tol"""
    sweeps = contraction_sweeps(gamma, scale, tol)
    threshold = tol * (1.0 - gamma) / gamma if gamma > 0 else math.inf
    v = np.zeros(num_states)
    n = 0
    for n in range(1, sweeps + 1):
        v_next = step(v)
        residual = float(np.max(np.abs(v_next - v)))
        v = v_next
        if residual <= threshold:
            break
    return ValueFunction(values=v, iterations=n, cap=scale / (1.0 - gamma))


def value_iteration_optimal(m: Mdp, tol: float = DEFAULT_TOL) -> ValueFunction:
    """
    Optimal values V* by Bellman-optimality iteration from V = 0.

    Args:
        m: valid MDP
        tol: sup-norm accuracy of the result

    Returns:
        ValueFunction within tol of V*
    """
    if tol <= 0:
        raise InvalidParameter("tol must be positive")

    def step(v):
        return (m.rewards + m.gamma * (m.transitions @ v)).max(axis=1)

    return _bellman_loop(step, m.num_states, m.gamma, m.reward_max, tol)


def on_policy_collapse(m: Mdp, pi: Policy) -> Tuple[np.ndarray, np.ndarray]:
    """
    Collapse an MDP under a policy into a Markov reward process.

    Args:
        m: MDP
        pi: policy over m's states and actions

    Returns:
        (R_pi, P_pi) with R_pi(s) = sum_a pi(a|s) R(s,a) and
        P_pi(s'|s) = sum_a pi(a|s) P(s'|s,a)
    """
    pi.check(m.num_states, m.num_actions)
    if pi.kind == 'deterministic':
        states = np.arange(m.num_states)
        return m.rewards[states, pi.det_actions].copy(), m.transitions[states, pi.det_actions].copy()

    probs = pi.as_matrix(m.num_actions)
    reward_vector = (probs * m.rewards).sum(axis=1)
    transition_matrix = np.einsum('sa,sat->st', probs, m.transitions)
    return reward_vector, transition_matrix


def policy_evaluation(m: Mdp, pi: Policy, tol: float = DEFAULT_TOL) -> ValueFunction:
    """
    Values V^pi by fixed-point iteration of the on-policy Bellman operator.

    Args:
        m: valid MDP
        pi: policy of matching shape
        tol: sup-norm accuracy of the result

    Returns:
        ValueFunction within tol of V^pi
    """
    if tol <= 0:
        raise InvalidParameter("tol must be positive")
    reward_vector, transition_matrix = on_policy_collapse(m, pi)

    def step(v):
        return reward_vector + m.gamma * (transition_matrix @ v)

    return _bellman_loop(step, m.num_states, m.gamma, m.reward_max, tol)


def solve_policy_value(m: Mdp, pi: Policy) -> np.ndarray:
    """Exact V^pi from the linear system (I - gamma P_pi) V = R_pi"""
    reward_vector, transition_matrix = on_policy_collapse(m, pi)
    system = np.eye(m.num_states) - m.gamma * transition_matrix
    return np.linalg.solve(system, reward_vector)


def greedy_policy(m: Mdp, v: ValueFunction) -> Policy:
    """
    Deterministic policy maximizing R(s,a) + gamma * E[v(s')].

    Ties go to the lowest action index.
    """
    values = v.values if isinstance(v, ValueFunction) else np.asarray(v, dtype=float)
    if values.shape != (m.num_states,):
        raise ShapeMismatch(f"value vector must have length {m.num_states}")
    q = m.rewards + m.gamma * (m.transitions @ values)
    return Policy.deterministic(np.argmax(q, axis=1))


def optimal_policy(m: Mdp, tol: float = DEFAULT_TOL) -> Tuple[ValueFunction, Policy]:
    """V* and its greedy policy"""
    v_star = value_iteration_optimal(m, tol)
    return v_star, greedy_policy(m, v_star)
