"""Configuration constants for the GBSM Bounds Lab"""

import os

# Numerical tolerances
DEFAULT_TOL = 1e-6  # convergence threshold for metric and value iteration
OPTIMALITY_TOL = 1e-9  # transport optimum accuracy
FEASIBILITY_TOL = 1e-8  # transport plan marginals
STOCHASTIC_ATOL = 1e-9  # row sums of transition tensors
NEGATIVE_CLAMP = 1e-12  # tiny negative probabilities are clamped to zero
VALUE_RANGE_ATOL = 1e-9  # relative slack on the [0, R_max/(1-gamma)] value range

# Fixed-point iteration settings
MAX_ITERS_FACTOR = 10  # max_iters = factor * a-priori sweep count
SLACK_FACTOR = 5  # containment slack = factor * tol / (1 - gamma)

# Transport oracle settings
ORACLE_MAX_SUPPORT = 6

# Perturbation settings
PERTURB_MAX_RETRIES = 100

# Garnet defaults
GARNET_STATES = 20
GARNET_ACTIONS = 5
GARNET_BRANCHING = 0.5  # 50% branching factor
GARNET_GAMMA = 0.9
GARNET_REWARD_MAX = 1.0

# Experiment defaults
EXPERIMENT_GAMMAS = [0.1, 0.5, 0.9]
EXPERIMENT_TRIALS = 100
EXPERIMENT_SEED = 2024
NOISE_STDS = [0.1, 0.2, 0.3]
AGG_FRACTION = 0.5  # half of the states are replaced by their representative
SAMPLE_EPSILON = 0.4
SAMPLE_ALPHA = 0.1
PRACTICAL_SAMPLES_PER_PAIR = 10000
PRACTICAL_DIAGONAL_FRACTION = 0.05  # acceptable self-distance as a share of R_max/(1-gamma)

# Dataset-driven metric defaults
PRACTICAL_ETA1 = 30  # minimum samples per state-action pair

EXPERIMENTS = [
    'transfer',
    'vfa',
    'on_policy_vfa',
    'ssa_agg',
    'ssa_est',
    'composite',
    'practical',
    'properties',
    'sample_complexity'
]

# Worker pool
MAX_WORKERS = int(os.environ.get('GBSM_MAX_WORKERS', os.cpu_count() or 1))

# Logging
LOG_LEVEL = os.environ.get('GBSM_LOG_LEVEL', 'INFO').upper()
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

# Exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_COMPUTATION = 2
EXIT_IO = 3
