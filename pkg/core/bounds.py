"""
Bound Evaluation

Computes each regret / approximation bound next to the ground-truth
quantity it is meant to contain, one BoundReport per trial.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import SLACK_FACTOR, PRACTICAL_DIAGONAL_FRACTION
from core.exceptions import InvalidParameter, ShapeMismatch, ActionSpaceMismatch
from core.mdp import (
    Mdp, Policy, value_iteration_optimal, policy_evaluation, greedy_policy
)
from core.transport import wasserstein1
from core.metrics import (
    FixedPointConfig, MetricMatrix, gbsm, bsm, gbsm_conference, gbsm_on_policy,
    tv_surrogate, collapse_to_chain
)
from core.approximation import (
    AggregationMap, build_aggregated_mdp, build_empirical_mdp, perturb_mdp_gaussian,
    lift_policy, sigma_from_metric, sample_complexity_ssa, sample_dataset
)
from core.practical import PracticalConfig, compute_gbsm_practical

logger = logging.getLogger(__name__)


def theorem_slack(gamma: float, tol: float) -> float:
    """Additive slack for containment checks, SLACK_FACTOR * tol / (1 - gamma)"""
    return SLACK_FACTOR * tol / (1.0 - gamma)


@dataclass
class BoundReport:
    """
    Ground truth and named bounds of one trial.

    Attributes:
        trial_id: trial index within its campaign
        gamma: discount factor
        ground_truth: the quantity every bound should contain
        bounds: bound name -> value
        contained: bound name -> value >= ground_truth - slack
        slack: additive slack used for the containment flags
        empirical: names of bounds recorded without a containment guarantee
        checks: auxiliary pass/fail checks (orderings, value-difference bound)
        extras: trial parameters and diagnostics carried into the CSV row
    """
    trial_id: int
    gamma: float
    ground_truth: float
    bounds: Dict[str, float]
    contained: Dict[str, bool]
    slack: float
    empirical: Tuple[str, ...] = ()
    checks: Dict[str, bool] = field(default_factory=dict)
    extras: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def build(cls, trial_id: int, gamma: float, ground_truth: float, bounds: Dict[str, float],
              slack: float, empirical: Tuple[str, ...] = (), checks: Optional[Dict[str, bool]] = None,
              extras: Optional[Dict[str, float]] = None) -> 'BoundReport':
        if slack < 0:
            raise InvalidParameter("slack must be nonnegative")
        bounds = {name: float(value) for name, value in bounds.items()}
        contained = {name: bool(value >= ground_truth - slack) for name, value in bounds.items()}
        return cls(
            trial_id=int(trial_id),
            gamma=float(gamma),
            ground_truth=float(ground_truth),
            bounds=bounds,
            contained=contained,
            slack=float(slack),
            empirical=tuple(empirical),
            checks={name: bool(ok) for name, ok in (checks or {}).items()},
            extras=dict(extras or {}),
        )

    @property
    def theorem_bounds(self) -> Tuple[str, ...]:
        return tuple(name for name in self.bounds if name not in self.empirical)

    def all_contained(self) -> bool:
        """Containment of every theorem-backed bound (empirical ones are exempt)"""
        return all(self.contained[name] for name in self.theorem_bounds)

    def all_checks_pass(self) -> bool:
        return all(self.checks.values())

    def to_row(self) -> dict:
        """Flat CSV row: ids, ground truth, bounds, containment flags, checks, slack, extras"""
        row = {'trial_id': self.trial_id, 'gamma': self.gamma, 'ground_truth': self.ground_truth}
        row.update(self.bounds)
        row.update({f'contained_{name}': flag for name, flag in self.contained.items()})
        row.update({f'check_{name}': flag for name, flag in self.checks.items()})
        row['slack'] = self.slack
        row['empirical'] = ';'.join(self.empirical)
        row.update(self.extras)
        return row


@dataclass(frozen=True, eq=False)
class StateActionMaps:
    """
    State mapping f: S2 -> S1 and action mapping g: A1 -> A2.

    g is either a length-|A1| vector or an |S2| x |A1| table when the action
    mapping depends on the target state.
    """
    f: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'f', np.asarray(self.f, dtype=np.int64))
        object.__setattr__(self, 'g', np.asarray(self.g, dtype=np.int64))

    @classmethod
    def identity(cls, m1: Mdp, m2: Mdp) -> 'StateActionMaps':
        if m1.num_states != m2.num_states:
            raise ShapeMismatch("identity state mapping needs equal state counts")
        if m1.num_actions != m2.num_actions:
            raise ActionSpaceMismatch(m1.num_actions, m2.num_actions)
        return cls(f=np.arange(m2.num_states), g=np.arange(m1.num_actions))

    def validate(self, m1: Mdp, m2: Mdp) -> None:
        if self.f.shape != (m2.num_states,):
            raise ShapeMismatch(f"state mapping must have {m2.num_states} entries")
        if self.f.min() < 0 or self.f.max() >= m1.num_states:
            raise ShapeMismatch(f"state mapping targets must lie in [0, {m1.num_states})")
        if self.g.shape not in ((m1.num_actions,), (m2.num_states, m1.num_actions)):
            raise ShapeMismatch(
                f"action mapping must be length {m1.num_actions} or {m2.num_states}x{m1.num_actions}"
            )
        if self.g.min() < 0 or self.g.max() >= m2.num_actions:
            raise ShapeMismatch(f"action mapping targets must lie in [0, {m2.num_actions})")

    def action_table(self, num_states2: int) -> np.ndarray:
        """|S2| x |A1| table of g"""
        if self.g.ndim == 1:
            return np.tile(self.g, (num_states2, 1))
        return self.g


# ---- Shared helpers ----

def argmin_state_map(metric: MetricMatrix) -> np.ndarray:
    """f(s') = argmin_s d(s, s'), ties to the lowest index"""
    return np.argmin(metric.dist, axis=0)


def _delta_entry(m1: Mdp, m2: Mdp, dist: np.ndarray, s: int, a: int, s2: int, a2: int) -> float:
    w1 = wasserstein1(m1.transitions[s, a], m2.transitions[s2, a2], dist).cost
    return abs(m1.rewards[s, a] - m2.rewards[s2, a2]) + m1.gamma * w1


def greedy_action_map(m1: Mdp, m2: Mdp, metric: MetricMatrix, f) -> StateActionMaps:
    """
    State-dependent action mapping g(s', a) = argmin_a' delta((f(s'),a),(s',a')).
    """
    f = np.asarray(f, dtype=np.int64)
    table = np.zeros((m2.num_states, m1.num_actions), dtype=np.int64)
    for s2 in range(m2.num_states):
        for a in range(m1.num_actions):
            costs = [_delta_entry(m1, m2, metric.dist, f[s2], a, s2, a2) for a2 in range(m2.num_actions)]
            table[s2, a] = int(np.argmin(costs))
    return StateActionMaps(f=f, g=table)


def transferred_policy(pi: Policy, maps: StateActionMaps, m1: Mdp, m2: Mdp) -> Policy:
    """Policy acting at s' as g(pi(f(s')))"""
    table = maps.action_table(m2.num_states)
    states = np.arange(m2.num_states)
    if pi.kind == 'deterministic':
        return Policy.deterministic(table[states, pi.det_actions[maps.f]])
    source = pi.as_matrix(m1.num_actions)[maps.f]
    probs = np.zeros((m2.num_states, m2.num_actions))
    np.add.at(probs, (np.repeat(states, m1.num_actions), table.ravel()), source.ravel())
    return Policy.stochastic(probs)


def _source_suboptimality(m1: Mdp, cfg: FixedPointConfig, source_policy: Optional[Policy]) -> Tuple[Policy, float]:
    v1_star = value_iteration_optimal(m1, cfg.tol)
    pi = source_policy if source_policy is not None else greedy_policy(m1, v1_star)
    v1_pi = policy_evaluation(m1, pi, cfg.tol)
    return pi, float(np.max(np.abs(v1_star.values - v1_pi.values)))


def value_difference_holds(v1: np.ndarray, v2: np.ndarray, dist: np.ndarray, slack: float) -> bool:
    """|V1(s) - V2(s')| <= d(s, s') + slack for every pair"""
    gaps = np.abs(v1[:, None] - v2[None, :])
    return bool(np.all(gaps <= dist + slack))


# ---- Policy transfer ----

def transfer_ground_truth(m1: Mdp, m2: Mdp, maps: StateActionMaps, cfg: Optional[FixedPointConfig] = None,
                          source_policy: Optional[Policy] = None) -> float:
    """
    Regret of the source-optimal policy transferred through (f, g).

    Args:
        m1: source MDP
        m2: target MDP
        maps: state and action mappings
        cfg: tolerance for value iteration and policy evaluation
        source_policy: policy to transfer; defaults to the greedy optimal policy of m1

    Returns:
        max_s' |V2*(s') - V2^pi(s')|
    """
    cfg = cfg or FixedPointConfig()
    maps.validate(m1, m2)
    if source_policy is None:
        source_policy = greedy_policy(m1, value_iteration_optimal(m1, cfg.tol))
    pi2 = transferred_policy(source_policy, maps, m1, m2)
    v2_star = value_iteration_optimal(m2, cfg.tol)
    v2_pi = policy_evaluation(m2, pi2, cfg.tol)
    return float(np.max(np.abs(v2_star.values - v2_pi.values)))


def transfer_bound_general(m1: Mdp, m2: Mdp, maps: StateActionMaps, cfg: Optional[FixedPointConfig] = None,
                           metric: Optional[MetricMatrix] = None,
                           source_policy: Optional[Policy] = None) -> float:
    """
    General regret bound for arbitrary state and action mappings.

    (max d(f(s'),s') + max delta((f(s'),a),(s',g(a))) + (1+gamma) max |V1* - V1^pi|) / (1 - gamma)
    """
    cfg = cfg or FixedPointConfig()
    maps.validate(m1, m2)
    metric = metric or gbsm(m1, m2, cfg)
    gamma = m1.gamma
    states2 = np.arange(m2.num_states)
    table = maps.action_table(m2.num_states)

    state_term = float(metric.dist[maps.f, states2].max())
    alignment_term = max(
        _delta_entry(m1, m2, metric.dist, maps.f[s2], a, s2, table[s2, a])
        for s2 in states2 for a in range(m1.num_actions)
    )
    _, suboptimality = _source_suboptimality(m1, cfg, source_policy)
    return (state_term + alignment_term + (1.0 + gamma) * suboptimality) / (1.0 - gamma)


def transfer_bound_identity_action(m1: Mdp, m2: Mdp, f, cfg: Optional[FixedPointConfig] = None,
                                   metric: Optional[MetricMatrix] = None,
                                   source_policy: Optional[Policy] = None) -> float:
    """Regret bound with the action mapping g(a) = a on a shared action space"""
    if m1.num_actions != m2.num_actions:
        raise ActionSpaceMismatch(m1.num_actions, m2.num_actions)
    cfg = cfg or FixedPointConfig()
    metric = metric or gbsm(m1, m2, cfg)
    f = np.asarray(f, dtype=np.int64)
    gamma = m1.gamma
    state_term = float(metric.dist[f, np.arange(m2.num_states)].max())
    _, suboptimality = _source_suboptimality(m1, cfg, source_policy)
    return 2.0 / (1.0 - gamma) * state_term + (1.0 + gamma) / (1.0 - gamma) * suboptimality


def empirical_bound_2maxd(m1: Mdp, m2: Mdp, f, cfg: Optional[FixedPointConfig] = None,
                          metric: Optional[MetricMatrix] = None) -> float:
    """2 max_s' d(f(s'), s'), recorded without a containment guarantee"""
    metric = metric or gbsm(m1, m2, cfg or FixedPointConfig())
    f = np.asarray(f, dtype=np.int64)
    return 2.0 * float(metric.dist[f, np.arange(m2.num_states)].max())


def transfer_check(m1: Mdp, m2: Mdp, cfg: Optional[FixedPointConfig] = None, trial_id: int = 0,
                   state_map: str = 'identity', action_map: str = 'identity') -> BoundReport:
    """
    Policy transfer trial.

    Args:
        m1: source MDP
        m2: target MDP
        cfg: stopping rule shared by metrics and value iteration
        trial_id: row id
        state_map: 'identity' or 'argmin' (f(s') = argmin_s d(s, s'))
        action_map: 'identity' or 'greedy' (delta-greedy, state dependent)

    Returns:
        BoundReport with theorem6, corollary1, corollary1_conf and empirical_2maxd
    """
    cfg = cfg or FixedPointConfig()
    gamma = m1.gamma
    slack = theorem_slack(gamma, cfg.tol)
    metric = gbsm(m1, m2, cfg)

    if state_map == 'identity':
        f = np.arange(m2.num_states)
    elif state_map == 'argmin':
        f = argmin_state_map(metric)
    else:
        raise InvalidParameter(f"unknown state map {state_map!r}")

    if action_map == 'identity':
        if m1.num_actions != m2.num_actions:
            raise ActionSpaceMismatch(m1.num_actions, m2.num_actions)
        maps = StateActionMaps(f=f, g=np.arange(m1.num_actions))
    elif action_map == 'greedy':
        maps = greedy_action_map(m1, m2, metric, f)
    else:
        raise InvalidParameter(f"unknown action map {action_map!r}")

    v1_star = value_iteration_optimal(m1, cfg.tol)
    v2_star = value_iteration_optimal(m2, cfg.tol)
    pi = greedy_policy(m1, v1_star)

    ground_truth = transfer_ground_truth(m1, m2, maps, cfg, source_policy=pi)
    bounds = {'theorem6': transfer_bound_general(m1, m2, maps, cfg, metric, pi)}
    checks = {'theorem2': value_difference_holds(v1_star.values, v2_star.values, metric.dist, slack)}

    if m1.num_actions == m2.num_actions:
        conference = gbsm_conference(m1, m2, cfg)
        bounds['corollary1'] = transfer_bound_identity_action(m1, m2, f, cfg, metric, pi)
        bounds['corollary1_conf'] = transfer_bound_identity_action(m1, m2, f, cfg, conference, pi)
        checks['hausdorff_tighter'] = bounds['corollary1'] <= bounds['corollary1_conf'] + slack
    bounds['empirical_2maxd'] = empirical_bound_2maxd(m1, m2, f, cfg, metric)

    return BoundReport.build(trial_id, gamma, ground_truth, bounds, slack,
                             empirical=('empirical_2maxd',), checks=checks,
                             extras={'iterations': metric.iterations})


# ---- Value-function approximation ----

def vfa_check(m: Mdp, agg: AggregationMap, cfg: Optional[FixedPointConfig] = None,
              trial_id: int = 0) -> BoundReport:
    """
    Optimal-value error of an aggregated MDP against sigma-based bounds.

    ground_truth = max_s |V1*(s) - V_[1]*(s)|; bounds gbsm_sigma, bsm_over,
    bsm_legacy and the shared-action gbsm_conf_sigma.
    """
    cfg = cfg or FixedPointConfig()
    gamma = m.gamma
    slack = theorem_slack(gamma, cfg.tol)
    aggregated = build_aggregated_mdp(m, agg)

    v_star = value_iteration_optimal(m, cfg.tol).values
    v_agg = value_iteration_optimal(aggregated, cfg.tol).values
    ground_truth = float(np.max(np.abs(v_star - v_agg)))

    sigma = sigma_from_metric(gbsm(m, aggregated, cfg), agg)
    sigma_tilde = sigma_from_metric(bsm(m, cfg), agg)
    sigma_conf = sigma_from_metric(gbsm_conference(m, aggregated, cfg), agg)

    bounds = {
        'gbsm_sigma': sigma,
        'bsm_over': sigma_tilde / (1.0 - gamma),
        'bsm_legacy': 2.0 * sigma_tilde / (1.0 - gamma),
        'gbsm_conf_sigma': sigma_conf,
    }
    checks = {
        'sigma_le_bsm': bounds['gbsm_sigma'] <= bounds['bsm_over'] + slack,
        'bsm_le_legacy': bounds['bsm_over'] <= bounds['bsm_legacy'] + slack,
        'sigma_le_conf': bounds['gbsm_sigma'] <= bounds['gbsm_conf_sigma'] + slack,
    }
    return BoundReport.build(trial_id, gamma, ground_truth, bounds, slack, checks=checks,
                             extras={'representatives': len(agg.representatives)})


def on_policy_vfa_check(m: Mdp, agg: AggregationMap, pi: Policy, cfg: Optional[FixedPointConfig] = None,
                        trial_id: int = 0) -> BoundReport:
    """
    Policy-value error of an aggregated MDP evaluated under the lifted policy.

    ground_truth = max_s |V1^pi(s) - V_[1]^pi(s)|; bounds gbsm_pi, mid, legacy
    and on_policy_tv, the transport-free bound on the two induced chains.
    """
    cfg = cfg or FixedPointConfig()
    gamma = m.gamma
    slack = theorem_slack(gamma, cfg.tol)
    aggregated = build_aggregated_mdp(m, agg)
    lifted = lift_policy(pi, agg)

    v_pi = policy_evaluation(m, pi, cfg.tol).values
    v_agg = policy_evaluation(aggregated, lifted, cfg.tol).values
    ground_truth = float(np.max(np.abs(v_pi - v_agg)))

    on_policy = gbsm_on_policy(m, aggregated, pi, cfg, pi2=lifted)
    chain = collapse_to_chain(m, pi)
    chain_bsm = bsm(chain, cfg)
    sigma_tilde = sigma_from_metric(chain_bsm, agg)

    bounds = {
        'gbsm_pi': float(on_policy.diagonal().max()),
        'mid': sigma_tilde / (1.0 - gamma),
        'legacy': 2.0 * sigma_tilde / (1.0 - gamma),
        'on_policy_tv': tv_surrogate(chain, collapse_to_chain(aggregated, lifted))[1],
    }
    checks = {
        'gbsm_le_mid': bounds['gbsm_pi'] <= bounds['mid'] + slack,
        'gbsm_le_tv': bounds['gbsm_pi'] <= bounds['on_policy_tv'] + slack,
        'mid_le_legacy': bounds['mid'] <= bounds['legacy'] + slack,
    }
    return BoundReport.build(trial_id, gamma, ground_truth, bounds, slack, checks=checks)


# ---- State-similarity approximation ----

def ssa_aggregation_check(m1: Mdp, m2: Mdp, agg1: AggregationMap, agg2: AggregationMap,
                          cfg: Optional[FixedPointConfig] = None, trial_id: int = 0) -> BoundReport:
    """
    Metric distortion caused by aggregating both MDPs.

    ground_truth = max |d^{1-2} - d^{[1]-[2]}|; bounds gbsm = sigma1 + sigma2,
    bsm = (sigma~1 + sigma~2) / (1 - gamma) and, for a single MDP aggregated
    once, bsm_legacy_single = 2 sigma~1 (2 + gamma) / (1 - gamma).
    """
    cfg = cfg or FixedPointConfig()
    gamma = m1.gamma
    slack = theorem_slack(gamma, cfg.tol)
    single = m1.same_as(m2) and np.array_equal(agg1.assign, agg2.assign)

    agg_m1 = build_aggregated_mdp(m1, agg1)
    agg_m2 = agg_m1 if single else build_aggregated_mdp(m2, agg2)
    original = gbsm(m1, m2, cfg)
    aggregated = gbsm(agg_m1, agg_m2, cfg)
    ground_truth = float(np.max(np.abs(original.dist - aggregated.dist)))

    sigma1 = sigma_from_metric(gbsm(m1, agg_m1, cfg), agg1)
    bsm1 = bsm(m1, cfg)
    sigma_tilde1 = sigma_from_metric(bsm1, agg1)
    if single:
        sigma2, sigma_tilde2 = sigma1, sigma_tilde1
    else:
        sigma2 = sigma_from_metric(gbsm(m2, agg_m2, cfg), agg2)
        sigma_tilde2 = sigma_from_metric(bsm(m2, cfg), agg2)

    bounds = {
        'gbsm': sigma1 + sigma2,
        'bsm': (sigma_tilde1 + sigma_tilde2) / (1.0 - gamma),
    }
    checks = {'gbsm_le_bsm': bounds['gbsm'] <= bounds['bsm'] + slack}
    if single:
        bounds['bsm_legacy_single'] = 2.0 * sigma_tilde1 * (2.0 + gamma) / (1.0 - gamma)
        checks['gbsm_le_legacy'] = bounds['gbsm'] <= bounds['bsm_legacy_single'] + slack
    return BoundReport.build(trial_id, gamma, ground_truth, bounds, slack, checks=checks,
                             extras={'single_mdp': single})


@dataclass(frozen=True)
class EstimationVariant:
    """How an estimated MDP is produced: 'sampled' (k draws per pair) or 'gaussian' (noise std)"""
    kind: str
    k: int = 0
    std: float = 0.0

    def __post_init__(self):
        if self.kind == 'sampled' and self.k < 1:
            raise InvalidParameter("sampled estimation needs k >= 1")
        if self.kind == 'gaussian' and self.std < 0:
            raise InvalidParameter("noise std must be nonnegative")
        if self.kind not in ('sampled', 'gaussian'):
            raise InvalidParameter(f"unknown estimation variant {self.kind!r}")

    @classmethod
    def sampled(cls, k: int) -> 'EstimationVariant':
        return cls(kind='sampled', k=k)

    @classmethod
    def gaussian(cls, std: float) -> 'EstimationVariant':
        return cls(kind='gaussian', std=std)

    def apply(self, m: Mdp, seed) -> Mdp:
        if self.kind == 'sampled':
            return build_empirical_mdp(m, self.k, seed)
        return perturb_mdp_gaussian(m, self.std, seed)

    def describe(self) -> Dict[str, float]:
        return {'variant': self.kind, 'sample_k': self.k, 'noise_std': self.std}


def ssa_estimation_check(m1: Mdp, m2: Mdp, variant: EstimationVariant, cfg: Optional[FixedPointConfig] = None,
                         seed=0, trial_id: int = 0) -> BoundReport:
    """
    Metric distortion caused by replacing both MDPs with estimates.

    For a single MDP (m1 equal to m2) one estimate serves both sides and the
    legacy bound (2 gamma / (1 - gamma)) max W1(P^, P; d~) is reported too.
    """
    cfg = cfg or FixedPointConfig()
    gamma = m1.gamma
    slack = theorem_slack(gamma, cfg.tol)
    single = m1.same_as(m2)
    seed1, seed2 = np.random.SeedSequence(seed).spawn(2)

    est1 = variant.apply(m1, seed1)
    est2 = est1 if single else variant.apply(m2, seed2)
    original = gbsm(m1, m2, cfg)
    estimated = gbsm(est1, est2, cfg)
    ground_truth = float(np.max(np.abs(original.dist - estimated.dist)))

    self1 = float(gbsm(m1, est1, cfg).diagonal().max())
    self2 = self1 if single else float(gbsm(m2, est2, cfg).diagonal().max())
    tv1 = tv_surrogate(m1, est1)[1]
    tv2 = tv1 if single else tv_surrogate(m2, est2)[1]

    bounds = {'gbsm': self1 + self2, 'tv': tv1 + tv2}
    checks = {'gbsm_le_tv': bounds['gbsm'] <= bounds['tv'] + slack}
    if single:
        d_tilde = bsm(m1, cfg).dist
        worst = max(
            wasserstein1(est1.transitions[s, a], m1.transitions[s, a], d_tilde).cost
            for s in range(m1.num_states) for a in range(m1.num_actions)
        )
        bounds['bsm_legacy'] = 2.0 * gamma / (1.0 - gamma) * worst
        checks['gbsm_le_legacy'] = bounds['gbsm'] <= bounds['bsm_legacy'] + slack
    extras = variant.describe()
    extras['single_mdp'] = single
    return BoundReport.build(trial_id, gamma, ground_truth, bounds, slack, checks=checks, extras=extras)


def composite_check(m: Mdp, agg: AggregationMap, variant: EstimationVariant,
                    cfg: Optional[FixedPointConfig] = None, seed=0, trial_id: int = 0) -> BoundReport:
    """
    Aggregation combined with estimation: M_[1^] aggregates an estimate of m.

    ground_truth = max |d^{1-1} - d^{[1^]-[1^]}|; bounds direct = 2 max_s d^{1-[1^]}(s,s)
    and decoupled = 2 max_s d^{1-[1]}(s,s) + 2 max_s d^{[1]-[1^]}(s,s).
    """
    cfg = cfg or FixedPointConfig()
    gamma = m.gamma
    slack = theorem_slack(gamma, cfg.tol)
    aggregated = build_aggregated_mdp(m, agg)
    combined = build_aggregated_mdp(variant.apply(m, seed), agg)

    original = gbsm(m, m, cfg)
    approximated = gbsm(combined, combined, cfg)
    ground_truth = float(np.max(np.abs(original.dist - approximated.dist)))

    direct = float(gbsm(m, combined, cfg).diagonal().max())
    via_aggregation = float(gbsm(m, aggregated, cfg).diagonal().max())
    via_estimation = float(gbsm(aggregated, combined, cfg).diagonal().max())

    bounds = {'direct': 2.0 * direct, 'decoupled': 2.0 * (via_aggregation + via_estimation)}
    checks = {'direct_le_decoupled': direct <= via_aggregation + via_estimation + slack}
    return BoundReport.build(trial_id, gamma, ground_truth, bounds, slack, checks=checks,
                             extras=variant.describe())


# ---- Metric properties ----

def properties_check(m1: Mdp, m2: Mdp, m3: Mdp, cfg: Optional[FixedPointConfig] = None,
                     trial_id: int = 0) -> BoundReport:
    """
    Metric axioms on an MDP triple.

    Checks symmetry, the inter-MDP triangle inequality, self-distance,
    the value cap, monotone iterates, Hausdorff-vs-shared-action tightness and
    the value-difference bound. ground_truth is max_s d^{1-2}(s,s) against the
    total variation surrogate bound.
    """
    cfg = cfg or FixedPointConfig()
    tol = cfg.tol
    gamma = m1.gamma
    slack = theorem_slack(gamma, tol)
    cap = max(m1.reward_max, m2.reward_max, m3.reward_max) / (1.0 - gamma)

    history = []
    d12 = gbsm(m1, m2, cfg, on_sweep=lambda n, d: history.append(d))
    d21 = gbsm(m2, m1, cfg)
    d13 = gbsm(m1, m3, cfg)
    d32 = gbsm(m3, m2, cfg)
    d11 = gbsm(m1, m1, cfg)
    conference = gbsm_conference(m1, m2, cfg)

    symmetry_gap = float(np.max(np.abs(d12.dist - d21.dist.T)))
    through = np.min(d13.dist[:, :, None] + d32.dist[None, :, :], axis=1)
    triangle_excess = float(np.max(d12.dist - through))
    monotone = all(np.all(later >= earlier - 1e-12) for earlier, later in zip(history, history[1:]))

    v1 = value_iteration_optimal(m1, tol).values
    v2 = value_iteration_optimal(m2, tol).values
    checks = {
        'symmetry': symmetry_gap <= 2 * tol,
        'triangle': triangle_excess <= 3 * tol,
        'identity': float(d11.diagonal().max()) <= tol / (1.0 - gamma),
        'cap': float(max(d12.dist.max(), d13.dist.max(), d32.dist.max())) <= cap + tol,
        'nonnegative': float(min(d12.dist.min(), d13.dist.min(), d32.dist.min())) >= 0.0,
        'monotone': monotone,
        'tightness': bool(np.all(d12.dist <= conference.dist + 2 * tol)),
        'theorem2': value_difference_holds(v1, v2, d12.dist, slack),
    }

    bounds = {}
    ground_truth = 0.0
    if m1.rewards.shape == m2.rewards.shape:
        ground_truth = float(d12.diagonal().max())
        bounds['tv'] = tv_surrogate(m1, m2)[1]

    extras = {'symmetry_gap': symmetry_gap, 'triangle_excess': triangle_excess,
              'iterations': d12.iterations}
    return BoundReport.build(trial_id, gamma, ground_truth, bounds, tol, checks=checks, extras=extras)


# ---- Sample complexity ----

def sample_complexity_check(m: Mdp, epsilon: float, alpha: float, cfg: Optional[FixedPointConfig] = None,
                            seed=0, trial_id: int = 0) -> BoundReport:
    """
    Realized single-MDP estimation error with K samples per pair taken from
    the SSA sample-complexity formula.

    ground_truth = 2 max_s d^{1-1^}(s,s); the 'epsilon' bound is probabilistic
    (holds with probability >= 1 - alpha) and is therefore marked empirical.
    """
    cfg = cfg or FixedPointConfig()
    gamma = m.gamma
    k = max(1, int(np.ceil(sample_complexity_ssa(epsilon, alpha, gamma, m.reward_max, m.num_states))))
    estimate = build_empirical_mdp(m, k, seed)
    error = 2.0 * float(gbsm(m, estimate, cfg).diagonal().max())
    return BoundReport.build(trial_id, gamma, error, {'epsilon': epsilon}, theorem_slack(gamma, cfg.tol),
                             empirical=('epsilon',), extras={'sample_k': k, 'alpha': alpha})


def practical_check(m: Mdp, per_pair: int, eta1: int, cfg: Optional[FixedPointConfig] = None,
                    seed=0, trial_id: int = 0,
                    diagonal_fraction: float = PRACTICAL_DIAGONAL_FRACTION) -> BoundReport:
    """
    Self-consistency of the dataset-driven metric: data sampled from m
    compared against m itself should give a near-zero diagonal.
    """
    cfg = cfg or FixedPointConfig()
    gamma = m.gamma
    data = sample_dataset(m, per_pair, seed)
    result = compute_gbsm_practical(data, m, PracticalConfig(eta1=eta1, eta2=cfg.tol, max_iters=cfg.max_iters))
    diagonal = result.matched_diagonal()
    ground_truth = float(diagonal.max()) if diagonal.size else 0.0

    bounds = {'diagonal_cap': diagonal_fraction * m.value_cap}
    checks = {
        'converged': result.metric.converged,
        'cap': float(result.metric.dist.max()) <= m.value_cap + cfg.tol,
    }
    extras = {key: value for key, value in result.report.items() if key != 'dropped_mass'}
    return BoundReport.build(trial_id, gamma, ground_truth, bounds, theorem_slack(gamma, cfg.tol),
                             checks=checks, extras=extras)
