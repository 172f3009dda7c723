"""Command-line entry point for the synthetic experiments.

Exit status is 0 when every estimate converged, 2 when some sweep point or
frame did not, and 1 on invalid input.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from calibration import CalibrationError, MissingModelError
from config import Config
from estimator import EstimationError, ObjectiveWeights
from experiments import ExperimentConfig, ForceReport, PointResult, Scenario, run
from skin_model import GridSpec, SkinModelError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='skin-readout',
        description='Estimate contact resistances of a resistive skin from crossbar readings.')
    parser.add_argument('--config', type=Path, help='JSON experiment configuration; flags override it.')
    parser.add_argument('--scenario', choices=[s.value for s in Scenario],
                        help='Experiment to run (default: wire_sweep).')
    parser.add_argument('--grid', help='Grid size as NxM (rows x cols).')
    parser.add_argument('--seed', type=int, help='Seed for measurement noise.')
    parser.add_argument('--noise-std', type=float, help='Gaussian voltage noise in V.')
    parser.add_argument('--out-dir', type=Path, help='Directory for tables, reports and heatmaps.')
    parser.add_argument('--alpha', type=float, help='Pair-cost weight of the regularized stage.')
    parser.add_argument('--beta', type=float, help='Chain-cost weight of the regularized stage.')
    parser.add_argument('--lambda', dest='lambda_', type=float,
                        help='Stripe-resistance weight of the regularized stage.')
    parser.add_argument('--frames', type=int, help='Frames in a synthetic stream replay.')
    parser.add_argument('--workers', type=int, help='Sweep points estimated in parallel.')
    parser.add_argument('--log-level', default=Config.LOG_LEVEL,
                        help='Logging level (default from LOG_LEVEL).')
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Configuration file (if any) with command-line flags applied on top."""
    config = ExperimentConfig.from_json_file(args.config) if args.config else ExperimentConfig()
    weights = config.weights_reg
    if any(v is not None for v in (args.alpha, args.beta, args.lambda_)):
        weights = ObjectiveWeights(
            weights.alpha if args.alpha is None else args.alpha,
            weights.beta if args.beta is None else args.beta,
            weights.lambda_ if args.lambda_ is None else args.lambda_)
    return config.with_overrides(
        scenario=Scenario(args.scenario) if args.scenario else None,
        grid=GridSpec.parse(args.grid) if args.grid else None,
        seed=args.seed,
        noise_std=args.noise_std,
        out_dir=args.out_dir,
        frames=args.frames,
        workers=args.workers,
        weights_reg=weights)


def converged(outcome) -> bool:
    if isinstance(outcome, list):
        return all(record.converged for record in outcome)
    if isinstance(outcome, PointResult):
        return outcome.record.converged
    if isinstance(outcome, ForceReport):
        return outcome.converged
    return outcome.get('converged_frames') == outcome.get('frames')


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        config = load_config(args)
        outcome = run(config)
    except (SkinModelError, CalibrationError, MissingModelError, EstimationError, OSError) as exc:
        logger.error('%s', exc)
        return EXIT_ERROR
    if not converged(outcome):
        logger.warning('some estimates did not converge; see %s', config.out_dir)
        return EXIT_NOT_CONVERGED
    logger.info('results written to %s', config.out_dir)
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
