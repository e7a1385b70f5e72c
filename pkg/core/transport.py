"""
Optimal transport between finite distributions.

Exact Wasserstein-1 via POT's network simplex, a dual-LP oracle used to
cross-check it, and the total variation distance.
"""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
import ot
from scipy.optimize import linprog
import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import NEGATIVE_CLAMP, STOCHASTIC_ATOL, ORACLE_MAX_SUPPORT, OPTIMALITY_TOL, FEASIBILITY_TOL
from core.exceptions import DimensionMismatch, NotADistribution, TooLarge, TransportError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability vector over a finite index set"""
    probs: np.ndarray

    def __len__(self):
        return len(self.probs)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)


@dataclass(frozen=True, eq=False)
class TransportSolution:
    """Optimal plan (n x m, marginals p and q) and its cost"""
    cost: float
    plan: np.ndarray


def as_distribution(values: Union[Distribution, np.ndarray, list]) -> Distribution:
    """
    Validate a probability vector.

    Entries in [-1e-12, 0) are clamped to zero; anything more negative, or a
    total further than 1e-9 from one, raises NotADistribution.
    """
    if isinstance(values, Distribution):
        return values
    probs = np.array(values, dtype=float, copy=True)
    if probs.ndim != 1 or probs.size == 0:
        raise DimensionMismatch(f"distribution must be a non-empty vector, got shape {probs.shape}")
    if not np.isfinite(probs).all() or probs.min() < -NEGATIVE_CLAMP:
        raise NotADistribution(float(np.nansum(probs)), float(np.nanmin(probs)))
    probs[probs < 0] = 0.0
    total = probs.sum()
    if abs(total - 1.0) > STOCHASTIC_ATOL:
        raise NotADistribution(float(total), float(probs.min()))
    probs.setflags(write=False)
    return Distribution(probs)


def _check_cost(cost, n: int, m: int) -> np.ndarray:
    cost = np.asarray(cost, dtype=float)
    if cost.shape != (n, m):
        raise DimensionMismatch(f"cost matrix shape {cost.shape} does not match ({n}, {m})")
    if not np.isfinite(cost).all() or (cost < 0).any():
        raise TransportError("cost entries must be finite and nonnegative")
    return cost


def w1_cost(p: np.ndarray, q: np.ndarray, cost: np.ndarray) -> float:
    """
    W1 between two pruned, strictly positive probability vectors.

    Used inside metric sweeps where validation has already happened.
    """
    if len(p) == 1:
        return float(q @ cost[0])
    if len(q) == 1:
        return float(p @ cost[:, 0])
    value, log = ot.emd2(p, q, np.ascontiguousarray(cost), log=True)
    if log.get('result_code', 1) != 1:
        raise TransportError(f"network simplex failed with code {log.get('result_code')}: {log.get('warning')}")
    return float(value)


def wasserstein1(p, q, cost) -> TransportSolution:
    """
    Exact Wasserstein-1 distance between two finite distributions.

    Zero-probability rows and columns are pruned before the network simplex
    runs and come back as zero rows/columns of the plan.

    Args:
        p: source distribution (length n)
        q: target distribution (length m)
        cost: n x m ground cost, nonnegative and finite

    Returns:
        TransportSolution with the optimal cost and plan
    """
    p = as_distribution(p)
    q = as_distribution(q)
    cost = _check_cost(cost, len(p), len(q))

    rows, cols = p.support, q.support
    p_sup = p.probs[rows] / p.probs[rows].sum()
    q_sup = q.probs[cols] / q.probs[cols].sum()
    sub_cost = np.ascontiguousarray(cost[np.ix_(rows, cols)])

    plan = np.zeros((len(p), len(q)))
    if len(rows) == 1 or len(cols) == 1:
        sub_plan = np.outer(p_sup, q_sup)
    else:
        sub_plan, log = ot.emd(p_sup, q_sup, sub_cost, log=True)
        if log.get('warning'):
            logger.warning(f"Transport solver warning: {log['warning']}")
        if log.get('result_code', 1) != 1:
            raise TransportError(f"network simplex failed with code {log.get('result_code')}")
    marginal_gap = max(np.abs(sub_plan.sum(axis=1) - p_sup).max(), np.abs(sub_plan.sum(axis=0) - q_sup).max())
    if marginal_gap > FEASIBILITY_TOL:
        raise TransportError(f"plan marginals off by {marginal_gap:.3e}")
    plan[np.ix_(rows, cols)] = sub_plan

    value = float(np.sum(sub_plan * sub_cost))
    if not np.isfinite(value) or value < -NEGATIVE_CLAMP:
        raise TransportError(f"invalid transport cost {value!r}")
    return TransportSolution(cost=max(value, 0.0), plan=plan)


def wasserstein1_oracle(p, q, cost) -> float:
    """
    W1 through the Kantorovich dual LP, for cross-checking small instances.

    Solves max p.u + q.v subject to u_i + v_j <= c_ij with scipy's HiGHS
    backend; v_0 is pinned to zero since the dual is shift invariant.

    Raises:
        TooLarge: if either support size exceeds ORACLE_MAX_SUPPORT
    """
    p = as_distribution(p)
    q = as_distribution(q)
    n, m = len(p), len(q)
    if n > ORACLE_MAX_SUPPORT or m > ORACLE_MAX_SUPPORT:
        raise TooLarge(n, m, ORACLE_MAX_SUPPORT)
    cost = _check_cost(cost, n, m)

    constraints = np.zeros((n * m, n + m))
    for i in range(n):
        for j in range(m):
            constraints[i * m + j, i] = 1.0
            constraints[i * m + j, n + j] = 1.0
    objective = -np.concatenate([p.probs, q.probs])
    bounds = [(None, None)] * (n + m)
    bounds[n] = (0.0, 0.0)

    result = linprog(objective, A_ub=constraints, b_ub=cost.ravel(), bounds=bounds, method='highs',
                     options={'primal_feasibility_tolerance': FEASIBILITY_TOL,
                              'dual_feasibility_tolerance': OPTIMALITY_TOL})
    if result.status != 0:
        raise TransportError(f"dual LP failed: {result.message}")
    return float(-result.fun)


def total_variation(p, q) -> float:
    """Half the L1 distance between two distributions of equal length"""
    p = as_distribution(p)
    q = as_distribution(q)
    if len(p) != len(q):
        raise DimensionMismatch(f"lengths differ: {len(p)} vs {len(q)}")
    return float(min(1.0, 0.5 * np.abs(p.probs - q.probs).sum()))
