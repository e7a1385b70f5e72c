"""
Bisimulation Metrics

Fixed-point computation of the standard bisimulation metric (BSM), the
generalized metric between two MDPs (GBSM, Hausdorff form), the
shared-action ("conference") GBSM, the on-policy GBSM and the total
variation surrogate bound.

All sweeps are synchronous: every transport problem of sweep n is solved
against the frozen iterate d_{n-1}.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import DEFAULT_TOL, MAX_ITERS_FACTOR
from core.exceptions import (
    InvalidParameter, ShapeMismatch, GammaMismatch, ActionSpaceMismatch,
    EmptySet, MaxItersExceeded
)
from core.mdp import Mdp, Policy, validate_mdp, contraction_sweeps, on_policy_collapse
from core.transport import w1_cost

logger = logging.getLogger(__name__)

SweepCallback = Callable[[int, np.ndarray], None]


@dataclass(frozen=True)
class FixedPointConfig:
    """
    Stopping rule for metric iteration.

    Attributes:
        tol: residual threshold (sup-norm change between sweeps)
        max_iters: sweep budget; None means MAX_ITERS_FACTOR x the a-priori count
        strict: raise MaxItersExceeded when the budget runs out instead of
            returning the last iterate flagged as non-converged
    """
    tol: float = DEFAULT_TOL
    max_iters: Optional[int] = None
    strict: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidParameter(f"tol must be positive, got {self.tol!r}")
        if self.max_iters is not None and self.max_iters < 1:
            raise InvalidParameter(f"max_iters must be positive, got {self.max_iters!r}")

    def resolve_max_iters(self, gamma: float, scale: float) -> int:
        if self.max_iters is not None:
            return int(self.max_iters)
        return MAX_ITERS_FACTOR * contraction_sweeps(gamma, scale, self.tol)


@dataclass(frozen=True, eq=False)
class MetricMatrix:
    """|S1| x |S2| distance matrix with its convergence record"""
    dist: np.ndarray
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True

    @property
    def rows(self) -> int:
        return self.dist.shape[0]

    @property
    def cols(self) -> int:
        return self.dist.shape[1]

    def at(self, i: int, j: int) -> float:
        return float(self.dist[i, j])

    def diagonal(self) -> np.ndarray:
        n = min(self.rows, self.cols)
        return self.dist[np.arange(n), np.arange(n)].copy()

    def to_dict(self) -> dict:
        return {
            'rows': int(self.rows),
            'cols': int(self.cols),
            'dist': self.dist.tolist(),
            'iterations': int(self.iterations),
            'residual': float(self.residual),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> 'MetricMatrix':
        dist = np.asarray(payload['dist'], dtype=float).reshape(payload['rows'], payload['cols'])
        return cls(
            dist=dist,
            iterations=int(payload.get('iterations', 0)),
            residual=float(payload.get('residual', 0.0)),
            converged=bool(payload.get('converged', True)),
        )


@dataclass(frozen=True, eq=False)
class PairCost:
    """delta((s,a),(s',a')) laid out as an (|S1||A1|) x (|S2||A2|) matrix"""
    delta: np.ndarray
    num_actions1: int
    num_actions2: int

    def block(self, s: int, s2: int) -> np.ndarray:
        """|A1| x |A2| cost block between X_s and X_s2"""
        a1, a2 = self.num_actions1, self.num_actions2
        return self.delta[s * a1:(s + 1) * a1, s2 * a2:(s2 + 1) * a2]

    def as_tensor(self, num_states1: int, num_states2: int) -> np.ndarray:
        return self.delta.reshape(num_states1, self.num_actions1, num_states2, self.num_actions2)


# ---- Internals ----

def _supports(m: Mdp) -> List[List[Tuple[np.ndarray, np.ndarray]]]:
    """Per (s, a): indices of positive successors and their renormalized masses"""
    table = []
    for s in range(m.num_states):
        row = []
        for a in range(m.num_actions):
            probs = m.transitions[s, a]
            idx = np.flatnonzero(probs > 0)
            mass = probs[idx]
            row.append((idx, mass / mass.sum()))
        table.append(row)
    return table


def _all_pairs_w1(sup1, sup2, d: np.ndarray) -> np.ndarray:
    """W1 for every (s,a) x (s',a') pair, flattened to (S1*A1, S2*A2)"""
    flat1 = [entry for row in sup1 for entry in row]
    flat2 = [entry for row in sup2 for entry in row]
    out = np.empty((len(flat1), len(flat2)))
    for i, (idx1, p) in enumerate(flat1):
        sub = d[idx1]
        for j, (idx2, q) in enumerate(flat2):
            out[i, j] = w1_cost(p, q, sub[:, idx2])
    return out


def _shared_action_w1(sup1, sup2, d: np.ndarray, symmetric: bool = False) -> np.ndarray:
    """W1 for pairs (s,a),(s',a) only, shaped (S1, S2, A)"""
    n1, n2, k = len(sup1), len(sup2), len(sup1[0])
    out = np.zeros((n1, n2, k))
    for s in range(n1):
        start = s + 1 if symmetric else 0
        for a in range(k):
            idx1, p = sup1[s][a]
            sub = d[idx1]
            for s2 in range(start, n2):
                idx2, q = sup2[s2][a]
                out[s, s2, a] = w1_cost(p, q, sub[:, idx2])
    if symmetric:
        upper = np.triu_indices(n1, k=1)
        out[upper[1], upper[0], :] = out[upper[0], upper[1], :]
    return out


def _hausdorff_tensor(tensor: np.ndarray) -> np.ndarray:
    """Hausdorff over the action axes of an (S1, A1, S2, A2) cost tensor"""
    forward = tensor.min(axis=3).max(axis=1)
    backward = tensor.min(axis=1).max(axis=2)
    return np.maximum(forward, backward)


def _check_gamma(m1: Mdp, m2: Mdp) -> None:
    if m1.gamma != m2.gamma:
        raise GammaMismatch(m1.gamma, m2.gamma)


def _iterate(sweep: Callable[[np.ndarray], np.ndarray], shape: Tuple[int, int], gamma: float,
             scale: float, cfg: FixedPointConfig, init: Optional[np.ndarray] = None,
             on_sweep: Optional[SweepCallback] = None, label: str = 'metric') -> MetricMatrix:
    """
    Run d_n = sweep(d_{n-1}) until the residual drops to cfg.tol or the
    a-priori sweep count is reached.
    """
    a_priori = contraction_sweeps(gamma, scale, cfg.tol)
    max_iters = cfg.resolve_max_iters(gamma, scale)

    if init is None:
        d = np.zeros(shape)
    else:
        d = np.array(init, dtype=float, copy=True)
        if d.shape != shape:
            raise ShapeMismatch(f"warm start shape {d.shape} does not match {shape}")

    residual = float('inf')
    for n in range(1, max_iters + 1):
        d_next = sweep(d)
        residual = float(np.max(np.abs(d_next - d))) if d.size else 0.0
        d = d_next
        if on_sweep is not None:
            on_sweep(n, d.copy())
        logger.debug(f"{label} sweep {n}: residual {residual:.3e}")
        if residual <= cfg.tol or n >= a_priori:
            return MetricMatrix(dist=d, iterations=n, residual=residual, converged=True)

    metric = MetricMatrix(dist=d, iterations=max_iters, residual=residual, converged=False)
    if cfg.strict:
        raise MaxItersExceeded(label, max_iters, residual, metric)
    logger.warning(f"{label} stopped after {max_iters} sweeps without converging (residual {residual:.3e})")
    return metric


# ---- Public operations ----

def hausdorff(x_costs) -> float:
    """
    Hausdorff distance of a cost block between two finite sets.

    Symmetric form with both directed terms: hausdorff(C) == hausdorff(C.T),
    and a square block with a zero diagonal gives 0.

    Args:
        x_costs: k x l matrix, rows index the first set and columns the second

    Returns:
        max{ max_x min_y c(x,y), max_y min_x c(x,y) }
    """
    costs = np.asarray(x_costs, dtype=float)
    if costs.ndim != 2 or costs.shape[0] == 0 or costs.shape[1] == 0:
        raise EmptySet(f"Hausdorff distance needs a non-empty 2-D block, got shape {costs.shape}")
    return float(max(costs.min(axis=1).max(), costs.min(axis=0).max()))


def delta_cost(m1: Mdp, m2: Mdp, d: MetricMatrix) -> PairCost:
    """
    Pair cost delta((s,a),(s',a')) = |R1(s,a) - R2(s',a')| + gamma W1(P1, P2; d).

    Args:
        m1: first MDP
        m2: second MDP with the same discount factor
        d: |S1| x |S2| metric used as transport ground cost

    Returns:
        PairCost
    """
    _check_gamma(m1, m2)
    dist = d.dist if isinstance(d, MetricMatrix) else np.asarray(d, dtype=float)
    if dist.shape != (m1.num_states, m2.num_states):
        raise ShapeMismatch(f"metric shape {dist.shape} does not match ({m1.num_states}, {m2.num_states})")
    w1 = _all_pairs_w1(_supports(m1), _supports(m2), dist)
    rewards = np.abs(m1.rewards.reshape(-1, 1) - m2.rewards.reshape(1, -1))
    return PairCost(delta=rewards + m1.gamma * w1, num_actions1=m1.num_actions, num_actions2=m2.num_actions)


def _gbsm(m1: Mdp, m2: Mdp, cfg: FixedPointConfig, init=None, on_sweep=None, label='gbsm') -> MetricMatrix:
    _check_gamma(m1, m2)
    validate_mdp(m1)
    validate_mdp(m2)
    sup1, sup2 = _supports(m1), _supports(m2)
    shape4 = (m1.num_states, m1.num_actions, m2.num_states, m2.num_actions)
    rewards = np.abs(m1.rewards.reshape(-1, 1) - m2.rewards.reshape(1, -1))

    def sweep(d):
        delta = rewards + m1.gamma * _all_pairs_w1(sup1, sup2, d)
        return _hausdorff_tensor(delta.reshape(shape4))

    return _iterate(sweep, (m1.num_states, m2.num_states), m1.gamma,
                    max(m1.reward_max, m2.reward_max), cfg, init, on_sweep, label)


def gbsm(m1: Mdp, m2: Mdp, cfg: Optional[FixedPointConfig] = None,
         init: Optional[np.ndarray] = None, on_sweep: Optional[SweepCallback] = None) -> MetricMatrix:
    """
    Generalized bisimulation metric d^{1-2} between the states of two MDPs.

    Iterates d_n(s,s') = H(X_s, X_s'; delta(d_{n-1})) from d_0 = 0 (or from
    `init`). Action spaces may differ in size.

    Args:
        m1: row MDP
        m2: column MDP, same discount factor
        cfg: stopping rule
        init: optional warm start, |S1| x |S2|
        on_sweep: optional callback receiving (sweep number, iterate)

    Returns:
        MetricMatrix of shape |S1| x |S2|
    """
    return _gbsm(m1, m2, cfg or FixedPointConfig(), init, on_sweep, 'gbsm')


def bsm(m: Mdp, cfg: Optional[FixedPointConfig] = None,
        on_sweep: Optional[SweepCallback] = None) -> MetricMatrix:
    """Standard single-MDP bisimulation metric, max over shared actions"""
    cfg = cfg or FixedPointConfig()
    validate_mdp(m)
    sup = _supports(m)
    rewards = np.abs(m.rewards[:, None, :] - m.rewards[None, :, :])

    def sweep(d):
        delta = rewards + m.gamma * _shared_action_w1(sup, sup, d, symmetric=True)
        out = delta.max(axis=2)
        np.fill_diagonal(out, 0.0)
        return out

    return _iterate(sweep, (m.num_states, m.num_states), m.gamma, m.reward_max, cfg,
                    on_sweep=on_sweep, label='bsm')


def gbsm_conference(m1: Mdp, m2: Mdp, cfg: Optional[FixedPointConfig] = None,
                    on_sweep: Optional[SweepCallback] = None) -> MetricMatrix:
    """
    Shared-action GBSM: d(s,s') = max_a delta((s,a),(s',a)).

    Raises:
        ActionSpaceMismatch: if the two MDPs have different action counts
    """
    cfg = cfg or FixedPointConfig()
    if m1.num_actions != m2.num_actions:
        raise ActionSpaceMismatch(m1.num_actions, m2.num_actions)
    _check_gamma(m1, m2)
    validate_mdp(m1)
    validate_mdp(m2)
    sup1, sup2 = _supports(m1), _supports(m2)
    rewards = np.abs(m1.rewards[:, None, :] - m2.rewards[None, :, :])

    def sweep(d):
        return (rewards + m1.gamma * _shared_action_w1(sup1, sup2, d)).max(axis=2)

    return _iterate(sweep, (m1.num_states, m2.num_states), m1.gamma,
                    max(m1.reward_max, m2.reward_max), cfg, on_sweep=on_sweep, label='gbsm_conference')


def collapse_to_chain(m: Mdp, pi: Policy) -> Mdp:
    """Single-action MDP whose only action follows pi"""
    reward_vector, transition_matrix = on_policy_collapse(m, pi)
    reward_vector = np.clip(reward_vector, 0.0, m.reward_max)
    return Mdp(rewards=reward_vector[:, None], transitions=transition_matrix[:, None, :],
               gamma=m.gamma, reward_max=m.reward_max)


def gbsm_on_policy(m1: Mdp, m2: Mdp, pi: Policy, cfg: Optional[FixedPointConfig] = None,
                   pi2: Optional[Policy] = None) -> MetricMatrix:
    """
    On-policy GBSM d_pi on the chains R^pi, P^pi of both MDPs.

    Args:
        m1: row MDP
        m2: column MDP
        pi: policy for m1 (and for m2 unless pi2 is given)
        cfg: stopping rule
        pi2: optional separate policy for m2

    Returns:
        MetricMatrix of shape |S1| x |S2|
    """
    chain1 = collapse_to_chain(m1, pi)
    chain2 = collapse_to_chain(m2, pi if pi2 is None else pi2)
    return _gbsm(chain1, chain2, cfg or FixedPointConfig(), label='gbsm_on_policy')


def tv_surrogate(m1: Mdp, m2: Mdp) -> Tuple[np.ndarray, float]:
    """
    Transport-free bound on max_s d^{1-2}(s,s) for MDPs on the same spaces.

    Args:
        m1: first MDP
        m2: second MDP with identical state and action counts

    Returns:
        (per_state, bound): per_state[s] = H(X_s, X_s; delta_TV) and
        bound = max_s per_state[s] / (1 - gamma)
    """
    if m1.rewards.shape != m2.rewards.shape:
        raise ShapeMismatch(f"state/action spaces differ: {m1.rewards.shape} vs {m2.rewards.shape}")
    _check_gamma(m1, m2)
    gamma = m1.gamma
    reward_max = max(m1.reward_max, m2.reward_max)

    tv = 0.5 * np.abs(m1.transitions[:, :, None, :] - m2.transitions[:, None, :, :]).sum(axis=3)
    rewards = np.abs(m1.rewards[:, :, None] - m2.rewards[:, None, :])
    delta = rewards + (gamma * reward_max / (1.0 - gamma)) * np.minimum(tv, 1.0)

    per_state = np.maximum(delta.min(axis=2).max(axis=1), delta.min(axis=1).max(axis=1))
    return per_state, float(per_state.max() / (1.0 - gamma))
