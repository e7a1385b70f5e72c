"""
GBSM Bounds Lab - Command-line entry point

Generates Garnet MDPs, computes bisimulation metrics within and between
MDPs, runs the dataset-driven metric and seeded bound-verification campaigns.

Usage:
    python app.py garnet-gen --states 20 --actions 5 --branching 0.5 --gamma 0.9 --seed 7 --out m.json
    python app.py gbsm --mdp1 a.json --mdp2 b.json --out d.json
    python app.py experiment transfer --trials 100 --out transfer.csv
"""

import argparse
import logging
import sys
import os

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config import (
    EXPERIMENTS, EXPERIMENT_GAMMAS, EXPERIMENT_TRIALS, EXPERIMENT_SEED, NOISE_STDS,
    AGG_FRACTION, SAMPLE_EPSILON, SAMPLE_ALPHA, PRACTICAL_ETA1, PRACTICAL_SAMPLES_PER_PAIR,
    GARNET_STATES, GARNET_ACTIONS, GARNET_BRANCHING, GARNET_GAMMA, GARNET_REWARD_MAX,
    DEFAULT_TOL, MAX_WORKERS, LOG_LEVEL, LOG_FORMAT,
    EXIT_OK, EXIT_USAGE, EXIT_COMPUTATION, EXIT_IO
)
from core.exceptions import GbsmError, UsageError
from core.mdp import GarnetConfig, garnet_generate
from core.metrics import FixedPointConfig, gbsm, bsm, gbsm_conference
from core.approximation import sample_dataset
from core.practical import PracticalConfig, compute_gbsm_practical
from core.experiments import (
    ExperimentConfig, run_campaign, summarize_campaign, summary_table, verify_containment_flags
)
from utils.export import (
    save_mdp, load_mdp, save_metric, write_dataset_csv, read_dataset_csv, save_stage_report,
    export_to_excel, format_summary_for_export
)

logger = logging.getLogger('gbsm')


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting on bad input"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_fixed_point_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--tol', type=float, default=DEFAULT_TOL, help='Convergence threshold')
    parser.add_argument('--max-iters', type=int, default=None, help='Sweep budget (default: derived from --tol)')


def _add_garnet_args(parser: argparse.ArgumentParser, gamma_many: bool = False) -> None:
    parser.add_argument('--states', type=int, default=GARNET_STATES, help='Number of states')
    parser.add_argument('--actions', type=int, default=GARNET_ACTIONS, help='Number of actions')
    parser.add_argument('--branching', type=float, default=GARNET_BRANCHING, help='Branching fraction in (0, 1]')
    parser.add_argument('--reward-max', type=float, default=GARNET_REWARD_MAX, help='Reward scale')
    if gamma_many:
        parser.add_argument('--gamma', type=float, nargs='+', default=list(EXPERIMENT_GAMMAS),
                            help='Discount factors')
    else:
        parser.add_argument('--gamma', type=float, default=GARNET_GAMMA, help='Discount factor')


def build_parser() -> CliParser:
    parser = CliParser(prog='gbsm', description='Bisimulation metrics between finite MDPs and their bounds')
    subparsers = parser.add_subparsers(dest='command', required=True)

    garnet = subparsers.add_parser('garnet-gen', help='Generate a random Garnet MDP')
    _add_garnet_args(garnet)
    garnet.add_argument('--seed', type=int, default=0)
    garnet.add_argument('--out', required=True, help='MDP JSON output path')
    garnet.set_defaults(handler=run_garnet_gen)

    metric = subparsers.add_parser('gbsm', help='GBSM between two MDPs')
    metric.add_argument('--mdp1', required=True, help='Row MDP (JSON)')
    metric.add_argument('--mdp2', required=True, help='Column MDP (JSON)')
    metric.add_argument('--variant', choices=['hausdorff', 'conference'], default='hausdorff')
    _add_fixed_point_args(metric)
    metric.add_argument('--out', required=True, help='MetricMatrix JSON output path')
    metric.set_defaults(handler=run_gbsm)

    single = subparsers.add_parser('bsm', help='Bisimulation metric within one MDP')
    single.add_argument('--mdp', required=True, help='MDP JSON')
    _add_fixed_point_args(single)
    single.add_argument('--out', required=True, help='MetricMatrix JSON output path')
    single.set_defaults(handler=run_bsm)

    sample = subparsers.add_parser('sample-data', help='Sample experience tuples from a known MDP')
    sample.add_argument('--mdp', required=True, help='MDP JSON')
    sample.add_argument('--per-pair', type=int, default=PRACTICAL_SAMPLES_PER_PAIR, help='Tuples per (s, a)')
    sample.add_argument('--seed', type=int, default=0)
    sample.add_argument('--out', required=True, help='Dataset CSV output path')
    sample.set_defaults(handler=run_sample_data)

    practical = subparsers.add_parser('gbsm-practical', help='GBSM between a dataset and a known source MDP')
    practical.add_argument('--data', required=True, help='Target dataset CSV (s,a,s_next,r)')
    practical.add_argument('--source', required=True, help='Source MDP JSON')
    practical.add_argument('--eta1', type=int, default=PRACTICAL_ETA1, help='Minimum samples per (s, a)')
    practical.add_argument('--eta2', type=float, default=DEFAULT_TOL, help='Convergence threshold')
    practical.add_argument('--max-iters', type=int, default=None)
    practical.add_argument('--out', required=True, help='MetricMatrix JSON output path')
    practical.add_argument('--report', default=None, help='Stage report JSON output path')
    practical.set_defaults(handler=run_gbsm_practical)

    experiment = subparsers.add_parser('experiment', help='Run a seeded bound-verification campaign')
    experiment.add_argument('name', choices=EXPERIMENTS)
    experiment.add_argument('--trials', type=int, default=EXPERIMENT_TRIALS)
    _add_garnet_args(experiment, gamma_many=True)
    experiment.add_argument('--seed', type=int, default=EXPERIMENT_SEED)
    experiment.add_argument('--noise-std', type=float, nargs='+', default=list(NOISE_STDS))
    experiment.add_argument('--sample-k', type=int, default=None, help='Use k-sample estimation instead of noise')
    experiment.add_argument('--agg-fraction', type=float, default=AGG_FRACTION)
    experiment.add_argument('--epsilon', type=float, default=SAMPLE_EPSILON)
    experiment.add_argument('--alpha', type=float, default=SAMPLE_ALPHA)
    experiment.add_argument('--eta1', type=int, default=PRACTICAL_ETA1)
    experiment.add_argument('--per-pair', type=int, default=PRACTICAL_SAMPLES_PER_PAIR)
    experiment.add_argument('--argmin-map', action='store_true', help='Use f(s\') = argmin_s d(s, s\') for transfer')
    experiment.add_argument('--tol', type=float, default=DEFAULT_TOL)
    experiment.add_argument('--workers', type=int, default=MAX_WORKERS)
    experiment.add_argument('--out', required=True, help='BoundReport CSV output path')
    experiment.add_argument('--summary-xlsx', default=None, help='Optional Excel summary output path')
    experiment.set_defaults(handler=run_experiment)

    return parser


# ---- Command handlers ----

def _fixed_point(args) -> FixedPointConfig:
    return FixedPointConfig(tol=args.tol, max_iters=args.max_iters)


def run_garnet_gen(args) -> int:
    cfg = GarnetConfig(
        num_states=args.states,
        num_actions=args.actions,
        branching_fraction=args.branching,
        gamma=args.gamma,
        reward_max=args.reward_max,
        seed=args.seed,
    )
    m = garnet_generate(cfg)
    save_mdp(m, args.out)
    logger.info(f"Wrote Garnet MDP ({m.num_states} states, {m.num_actions} actions) to {args.out}")
    return EXIT_OK


def run_gbsm(args) -> int:
    m1, m2 = load_mdp(args.mdp1), load_mdp(args.mdp2)
    cfg = _fixed_point(args)
    metric = gbsm(m1, m2, cfg) if args.variant == 'hausdorff' else gbsm_conference(m1, m2, cfg)
    save_metric(metric, args.out)
    print(f"{args.variant} GBSM {metric.rows}x{metric.cols}: max {metric.dist.max():.6g}, "
          f"{metric.iterations} sweeps, residual {metric.residual:.3e}")
    return EXIT_OK


def run_bsm(args) -> int:
    metric = bsm(load_mdp(args.mdp), _fixed_point(args))
    save_metric(metric, args.out)
    print(f"BSM {metric.rows}x{metric.cols}: max {metric.dist.max():.6g}, "
          f"{metric.iterations} sweeps, residual {metric.residual:.3e}")
    return EXIT_OK


def run_sample_data(args) -> int:
    data = sample_dataset(load_mdp(args.mdp), args.per_pair, args.seed)
    write_dataset_csv(data, args.out)
    logger.info(f"Wrote {len(data)} tuples to {args.out}")
    return EXIT_OK


def run_gbsm_practical(args) -> int:
    data = read_dataset_csv(args.data)
    source = load_mdp(args.source)
    result = compute_gbsm_practical(data, source, PracticalConfig(eta1=args.eta1, eta2=args.eta2,
                                                                  max_iters=args.max_iters))
    save_metric(result.metric, args.out)

    report = dict(result.report)
    report['target_state_ids'] = [int(s) for s in result.target_states]
    report['source_state_ids'] = [int(s) for s in result.source_states]
    if args.report:
        save_stage_report(report, args.report)
    print(f"|U_t| = {report['target_states']}, |U_s| = {report['source_states']}, "
          f"dropped tuples = {report['dropped_tuples']}, sweeps = {report['iterations']}")
    return EXIT_OK


def run_experiment(args) -> int:
    garnet = GarnetConfig(
        num_states=args.states,
        num_actions=args.actions,
        branching_fraction=args.branching,
        gamma=args.gamma[0],
        reward_max=args.reward_max,
        seed=0,
    )
    cfg = ExperimentConfig(
        experiment=args.name,
        trials=args.trials,
        gammas=tuple(args.gamma),
        garnet=garnet,
        noise_stds=tuple(args.noise_std),
        sample_k=args.sample_k,
        agg_fraction=args.agg_fraction,
        seed=args.seed,
        output_path=args.out,
        tol=args.tol,
        workers=args.workers,
        epsilon=args.epsilon,
        alpha=args.alpha,
        state_map='argmin' if args.argmin_map else 'identity',
        per_pair=args.per_pair,
        eta1=args.eta1,
    )

    step = max(1, (cfg.trials * len(cfg.gammas)) // 10)

    def progress(completed, total):
        if completed % step == 0 or completed == total:
            logger.info(f"Progress: {completed}/{total} trials")

    df = run_campaign(cfg, progress_callback=progress)
    summary = summarize_campaign(df)
    if not verify_containment_flags(df):
        logger.error("Recorded containment flags disagree with their inputs")
        return EXIT_COMPUTATION

    print(f"{cfg.experiment}: {summary['rows']} rows, {summary['failures']} failed")
    for name, stats in summary['bounds'].items():
        tag = ' (empirical)' if stats['empirical'] else ''
        print(f"  {name}{tag}: containment {stats['containment_rate']:.1%}, "
              f"mean bound/ground truth {stats['mean_tightness']:.4g}")
    for name, stats in summary['checks'].items():
        print(f"  check {name}: {stats['passed']}/{stats['total']}")

    if args.summary_xlsx:
        with open(args.summary_xlsx, 'wb') as f:
            f.write(export_to_excel(format_summary_for_export(summary_table(summary))))
    return EXIT_OK


def main(argv=None) -> int:
    """Parse arguments, dispatch to the command handler and map errors to exit codes"""
    logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else EXIT_OK
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except GbsmError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_COMPUTATION
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
