"""
Experiment Campaigns

Seeded Garnet trials for every bound family, run in a worker pool and
collected into one BoundReport row per (gamma, trial).
"""

import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import (
    EXPERIMENTS, EXPERIMENT_GAMMAS, EXPERIMENT_TRIALS, EXPERIMENT_SEED, NOISE_STDS,
    AGG_FRACTION, SAMPLE_EPSILON, SAMPLE_ALPHA, PRACTICAL_SAMPLES_PER_PAIR,
    PRACTICAL_ETA1, DEFAULT_TOL, MAX_WORKERS
)
from core.exceptions import GbsmError, InvalidParameter
from core.mdp import GarnetConfig, Policy, garnet_generate
from core.metrics import FixedPointConfig
from core.approximation import pairwise_aggregation
from core.bounds import (
    BoundReport, EstimationVariant, transfer_check, vfa_check, on_policy_vfa_check,
    ssa_aggregation_check, ssa_estimation_check, composite_check, properties_check,
    sample_complexity_check, practical_check
)
from utils.export import write_campaign_csv

logger = logging.getLogger(__name__)

# Independent random streams inside one trial
STREAM_MDP1, STREAM_MDP2, STREAM_MDP3, STREAM_AGG, STREAM_NOISE, STREAM_POLICY = range(6)


@dataclass(frozen=True)
class ExperimentConfig:
    """Campaign definition; the Garnet template's gamma and seed are overridden per trial"""
    experiment: str
    trials: int = EXPERIMENT_TRIALS
    gammas: Tuple[float, ...] = tuple(EXPERIMENT_GAMMAS)
    garnet: GarnetConfig = field(default_factory=GarnetConfig)
    noise_stds: Tuple[float, ...] = tuple(NOISE_STDS)
    sample_k: Optional[int] = None
    agg_fraction: float = AGG_FRACTION
    seed: int = EXPERIMENT_SEED
    output_path: Optional[str] = None
    tol: float = DEFAULT_TOL
    workers: int = MAX_WORKERS
    epsilon: float = SAMPLE_EPSILON
    alpha: float = SAMPLE_ALPHA
    state_map: str = 'identity'
    per_pair: int = PRACTICAL_SAMPLES_PER_PAIR
    eta1: int = PRACTICAL_ETA1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise InvalidParameter(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.trials < 1:
            raise InvalidParameter("trials must be at least 1")
        if not self.gammas or any(not 0.0 <= g < 1.0 for g in self.gammas):
            raise InvalidParameter(f"gammas must be a non-empty subset of [0, 1), got {self.gammas!r}")
        if not 0.0 < self.agg_fraction <= 1.0:
            raise InvalidParameter(f"agg_fraction must lie in (0, 1], got {self.agg_fraction!r}")
        if any(std < 0 for std in self.noise_stds) or not self.noise_stds:
            raise InvalidParameter("noise_stds must be a non-empty list of nonnegative values")
        if self.sample_k is not None and self.sample_k < 1:
            raise InvalidParameter("sample_k must be at least 1")
        if not self.tol > 0:
            raise InvalidParameter("tol must be positive")
        if self.state_map not in ('identity', 'argmin'):
            raise InvalidParameter(f"unknown state map {self.state_map!r}")

    def variant_for(self, trial_index: int) -> EstimationVariant:
        """Sampled estimation when sample_k is set, otherwise Gaussian noise cycling through noise_stds"""
        if self.sample_k is not None:
            return EstimationVariant.sampled(self.sample_k)
        return EstimationVariant.gaussian(self.noise_stds[trial_index % len(self.noise_stds)])


def derive_seed(master_seed: int, gamma_index: int, trial_index: int, stream: int = 0) -> int:
    """
    Child seed for one random stream of one trial.

    Uses numpy's SeedSequence with spawn key (gamma_index, trial_index, stream),
    so the value does not depend on execution order.
    """
    sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(gamma_index, trial_index, stream))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def _garnet(cfg: ExperimentConfig, gamma: float, gamma_index: int, trial_index: int, stream: int):
    template = replace(cfg.garnet, gamma=gamma, seed=derive_seed(cfg.seed, gamma_index, trial_index, stream))
    return garnet_generate(template)


def _random_policy(num_states: int, num_actions: int, seed: int) -> Policy:
    rng = np.random.default_rng(seed)
    return Policy.stochastic(rng.dirichlet(np.ones(num_actions), size=num_states))


def _run_report(cfg: ExperimentConfig, gamma_index: int, trial_index: int) -> BoundReport:
    gamma = cfg.gammas[gamma_index]
    fp = FixedPointConfig(tol=cfg.tol)

    def seed(stream):
        return derive_seed(cfg.seed, gamma_index, trial_index, stream)

    def mdp(stream):
        return _garnet(cfg, gamma, gamma_index, trial_index, stream)

    n = cfg.garnet.num_states

    if cfg.experiment == 'transfer':
        return transfer_check(mdp(STREAM_MDP1), mdp(STREAM_MDP2), fp, trial_index, state_map=cfg.state_map)
    if cfg.experiment == 'properties':
        return properties_check(mdp(STREAM_MDP1), mdp(STREAM_MDP2), mdp(STREAM_MDP3), fp, trial_index)

    m = mdp(STREAM_MDP1)
    if cfg.experiment == 'vfa':
        return vfa_check(m, pairwise_aggregation(n, cfg.agg_fraction, seed(STREAM_AGG)), fp, trial_index)
    if cfg.experiment == 'on_policy_vfa':
        agg = pairwise_aggregation(n, cfg.agg_fraction, seed(STREAM_AGG))
        pi = _random_policy(n, m.num_actions, seed(STREAM_POLICY))
        return on_policy_vfa_check(m, agg, pi, fp, trial_index)
    if cfg.experiment == 'ssa_agg':
        agg = pairwise_aggregation(n, cfg.agg_fraction, seed(STREAM_AGG))
        return ssa_aggregation_check(m, m, agg, agg, fp, trial_index)
    if cfg.experiment == 'ssa_est':
        return ssa_estimation_check(m, m, cfg.variant_for(trial_index), fp, seed(STREAM_NOISE), trial_index)
    if cfg.experiment == 'composite':
        agg = pairwise_aggregation(n, cfg.agg_fraction, seed(STREAM_AGG))
        return composite_check(m, agg, cfg.variant_for(trial_index), fp, seed(STREAM_NOISE), trial_index)
    if cfg.experiment == 'sample_complexity':
        return sample_complexity_check(m, cfg.epsilon, cfg.alpha, fp, seed(STREAM_NOISE), trial_index)
    if cfg.experiment == 'practical':
        return practical_check(m, cfg.per_pair, cfg.eta1, fp, seed(STREAM_NOISE), trial_index)
    raise InvalidParameter(f"unknown experiment {cfg.experiment!r}")


def run_trial(cfg: ExperimentConfig, gamma_index: int, trial_index: int) -> Dict:
    """
    Run one trial and flatten its report.

    Errors are logged and turned into a failure row so the campaign continues.

    Returns:
        CSV row dictionary (with an empty 'error' field on success)
    """
    try:
        row = _run_report(cfg, gamma_index, trial_index).to_row()
        row['error'] = ''
    except GbsmError as e:
        logger.warning(f"Trial {trial_index} (gamma={cfg.gammas[gamma_index]}) failed: {e}")
        row = {'trial_id': trial_index, 'gamma': cfg.gammas[gamma_index], 'error': f"{type(e).__name__}: {e}"}
    except Exception as e:
        logger.exception(f"Unexpected error in trial {trial_index} (gamma={cfg.gammas[gamma_index]})")
        row = {'trial_id': trial_index, 'gamma': cfg.gammas[gamma_index], 'error': f"{type(e).__name__}: {e}"}
    row['experiment'] = cfg.experiment
    return row


def run_campaign(cfg: ExperimentConfig,
                 progress_callback: Optional[Callable[[int, int], None]] = None) -> pd.DataFrame:
    """
    Run every (gamma, trial) of a campaign.

    Args:
        cfg: campaign definition
        progress_callback: Optional callback for progress updates (completed, total)

    Returns:
        DataFrame of BoundReport rows in (gamma, trial) order; also written to
        cfg.output_path when set
    """
    jobs = [(g, t) for g in range(len(cfg.gammas)) for t in range(cfg.trials)]
    total = len(jobs)
    rows: Dict[Tuple[int, int], Dict] = {}
    completed = 0
    logger.info(f"Running {cfg.experiment}: {cfg.trials} trials x {len(cfg.gammas)} discount factors")

    if cfg.workers <= 1:
        for job in jobs:
            rows[job] = run_trial(cfg, *job)
            completed += 1
            if progress_callback:
                progress_callback(completed, total)
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as executor:
            futures = {executor.submit(run_trial, cfg, *job): job for job in jobs}
            for future in as_completed(futures):
                rows[futures[future]] = future.result()
                completed += 1
                if progress_callback:
                    progress_callback(completed, total)

    df = pd.DataFrame([rows[job] for job in jobs])
    front = [c for c in ('trial_id', 'gamma', 'ground_truth') if c in df.columns]
    back = ['experiment', 'error']
    df = df[front + [c for c in df.columns if c not in front + back] + back]

    if cfg.output_path:
        write_campaign_csv(df, cfg.output_path)
        logger.info(f"Wrote {len(df)} rows to {cfg.output_path}")
    return df


def _bound_names(df: pd.DataFrame) -> List[str]:
    return [c[len('contained_'):] for c in df.columns if c.startswith('contained_')]


def summarize_campaign(df: pd.DataFrame) -> Dict:
    """
    Get summary statistics from campaign results.

    Args:
        df: DataFrame from run_campaign

    Returns:
        Dictionary with row/failure counts and, per bound, the containment
        rate and mean tightness ratio (bound / ground truth over rows with a
        positive ground truth); auxiliary checks report pass counts.
    """
    if df.empty:
        return {'rows': 0, 'failures': 0, 'bounds': {}, 'checks': {}}

    failed = df['error'].fillna('').astype(str) != '' if 'error' in df.columns else pd.Series(False, index=df.index)
    ok = df[~failed]
    empirical = set()
    if 'empirical' in ok.columns:
        for names in ok['empirical'].fillna('').astype(str):
            empirical.update(n for n in names.split(';') if n)

    bounds = {}
    for name in _bound_names(ok):
        flags = ok[f'contained_{name}'].dropna().astype(bool)
        positive = ok[ok['ground_truth'] > 0]
        ratios = (positive[name] / positive['ground_truth']).dropna()
        bounds[name] = {
            'containment_rate': float(flags.mean()) if len(flags) else float('nan'),
            'mean_tightness': float(ratios.mean()) if len(ratios) else float('nan'),
            'empirical': name in empirical,
        }

    checks = {}
    for column in [c for c in ok.columns if c.startswith('check_')]:
        flags = ok[column].dropna().astype(bool)
        checks[column[len('check_'):]] = {'passed': int(flags.sum()), 'total': int(len(flags))}

    return {'rows': int(len(df)), 'failures': int(failed.sum()), 'bounds': bounds, 'checks': checks}


def summary_table(summary: Dict) -> pd.DataFrame:
    """One row per bound name, ready for CSV/Excel export"""
    records = [{'bound': name, **stats} for name, stats in summary.get('bounds', {}).items()]
    return pd.DataFrame(records, columns=['bound', 'containment_rate', 'mean_tightness', 'empirical'])


def verify_containment_flags(df: pd.DataFrame, sample: int = 5, seed: int = 0) -> bool:
    """
    Recompute containment flags of up to `sample` random successful rows from
    their recorded bound, ground truth and slack.
    """
    ok = df[df['error'].fillna('').astype(str) == ''] if 'error' in df.columns else df
    if ok.empty:
        return True
    picked = ok.sample(n=min(sample, len(ok)), random_state=seed)
    for _, row in picked.iterrows():
        for name in _bound_names(ok):
            if pd.isna(row.get(name)):
                continue
            expected = bool(row[name] >= row['ground_truth'] - row['slack'])
            if expected != bool(row[f'contained_{name}']):
                logger.warning(f"Containment flag mismatch in trial {row['trial_id']} for {name}")
                return False
    return True
