'''
Command-line entry point.

    python -m neutron_transport <command> CONFIG.toml [--set key=value ...]

Every invocation writes <prefix>-manifest.json next to its outputs, also on failure.
Exit codes: 0 success, 1 failure, 2 configuration error, 3 extinction or
undefined estimate, 4 population cap exceeded.
'''
import argparse
import json
import logging
import platform
import sys
import time

from pathlib import Path

import mesa
import numpy as np
import pandas as pd
import scipy

from neutron_transport import __version__
from neutron_transport.config import (RunConfig, as_list, build_field, build_h, build_weight, complexity_inputs,
                                      initial_state, load_config, slab_config)
from neutron_transport.cost import cost_curve, plan_budget
from neutron_transport.estimators import OccupationBins, occupation_histogram, ratio_map
from neutron_transport.exceptions import (ConfigError, DomainError, ExtinctionError, NeutronTransportError,
                                          PopulationCapError)
from neutron_transport.helpers.output_utils import emit_heatmap, write_frame, write_json
from neutron_transport.htransform import phase_grid, simulate_hnrw
from neutron_transport.nbp import DEFAULT_POPULATION_CAP, simulate_nbp
from neutron_transport.nrw import simulate_nrw
from neutron_transport.run import EstimationSetup, default_workers, lambda_sweep
from neutron_transport.slab1d import (CRITICAL_TOLERANCE, complexity_constants, eigen, fixed_point_residual,
                                      oracle_summary, tabulate, verify_eigen)
from neutron_transport.smc import make_dynamics, smc_run
from neutron_transport.streams import cycle_generator, cycle_seed_sequence

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_EXTINCTION, EXIT_POPULATION_CAP = 0, 1, 2, 3, 4
SWEEP_ESTIMATORS = {'nbp': 'br', 'nrw': 'rw', 'hnrw': 'hrw'}


class Outcome:
    '''
    Files written by a command and whether its estimate was defined.
    '''

    def __init__(self):
        self.outputs: list[str] = []
        self.undefined = False
        self.summary: dict = {}

    def add(self, path: Path):
        self.outputs.append(str(path))


def _output_path(config: RunConfig, suffix: str) -> Path:
    directory = Path(config.output.get('directory', 'results'))
    prefix = config.output.get('prefix', 'run')
    return directory / f'{prefix}-{suffix}'


def _population_cap(config: RunConfig) -> int:
    return int(config.run.get('population_cap', DEFAULT_POPULATION_CAP))


def _setup(config: RunConfig, with_h: bool = False) -> EstimationSetup:
    field = build_field(config)
    r, v = initial_state(config, field)
    return EstimationSetup(field, tuple(r), tuple(v), build_weight(config.run.get('weight'), field, config),
                           build_h(config, field) if with_h else None, _population_cap(config))


def estimate_lambda(config: RunConfig, outcome: Outcome):
    if config.mode not in SWEEP_ESTIMATORS:
        raise ConfigError(f'estimate-lambda needs mode nrw, nbp or hnrw, got {config.mode!r}', 'run.mode')
    estimator = SWEEP_ESTIMATORS[config.mode]
    setup = _setup(config, with_h=estimator == 'hrw')
    frame = lambda_sweep(setup, as_list(config.run.get('t', 10.0)), as_list(config.run.get('k', 100)), estimator,
                         int(config.seed), int(config.run.get('iterations', 1)),
                         int(config.run.get('workers', default_workers())))
    outcome.add(write_frame(frame, _output_path(config, 'lambda.csv')))
    outcome.undefined = bool(frame['lambda_hat'].isna().any())
    outcome.summary = {'rows': len(frame)}


def slab_oracle(config: RunConfig, outcome: Outcome):
    slab = slab_config(config)
    solution = eigen(slab)
    report = oracle_summary(solution)
    report['fixed_point_residual'] = fixed_point_residual(slab.theta, solution.x_star)
    report['ode_residual'] = verify_eigen(solution, slab)
    outcome.add(write_json(report, _output_path(config, 'oracle.json')))
    outcome.add(write_frame(tabulate(solution), _output_path(config, 'eigenfunctions.csv')))
    outcome.summary = report


def regime_of(lambda_star: float) -> str:
    if abs(lambda_star) <= CRITICAL_TOLERANCE:
        return 'critical'
    return 'supercritical' if lambda_star > 0 else 'subcritical'


def plan(config: RunConfig, outcome: Outcome):
    regime = config.plan.get('regime')
    constants = complexity_inputs(config)
    if constants is None:
        slab = slab_config(config)
        field = build_field(config)
        r, v = initial_state(config, field)
        constants = complexity_constants(eigen(slab), slab, build_weight(config.run.get('weight'), field, config),
                                         r, v, float(config.plan.get('eta', 1e-3)),
                                         float(config.plan.get('cost_rate', 1.0)))
    if regime is None:
        regime = regime_of(constants.lambda_star)
    epsilon = config.plan.get('epsilon', 0.1)
    plans = [plan_budget(regime, constants, float(eps)).as_dict() | {'epsilon': float(eps)}
             for eps in as_list(epsilon)]
    outcome.add(write_json(plans if isinstance(epsilon, list) else plans[0], _output_path(config, 'plan.json')))
    frame = pd.DataFrame(plans, columns=['epsilon', 'regime', 'k', 't', 'predicted_cost', 'error_bound',
                                         't_asymptotic'])
    outcome.add(write_frame(frame, _output_path(config, 'plan.csv')))
    outcome.summary = {'kappa0': constants.kappa0, 'kappa': constants.kappa, 'lambda_star': constants.lambda_star}


def heatmap(config: RunConfig, outcome: Outcome):
    field = build_field(config)
    r, v = initial_state(config, field)
    section = config.heatmap
    bins = OccupationBins(field.domain, int(section.get('nx', 40)), int(section.get('ny', 1)),
                          int(section.get('n_sectors', 1)))
    t = float(as_list(config.run.get('t', 10.0))[-1])
    k = int(as_list(config.run.get('k', 100))[-1])
    histogram = occupation_histogram(field, bins, t, int(config.run.get('M', 100)), k, int(config.seed), r, v,
                                     section.get('estimator', 'br'), _population_cap(config))
    outcome.add(emit_heatmap(histogram, _output_path(config, 'heatmap.csv')))
    outcome.summary = {'total': float(histogram.values.sum())}


def particle_filter(config: RunConfig, outcome: Outcome):
    field = build_field(config)
    kind = config.run.get('dynamics', 'nbp')
    h = build_h(config, field) if kind == 'hnrw' else None
    dynamics = make_dynamics(kind, field, h, population_cap=_population_cap(config))
    threshold = config.run.get('ess_threshold')
    try:
        result = smc_run(field, dynamics, int(config.run.get('n_particles', 1000)),
                         float(config.run.get('delta', 1.0)), float(as_list(config.run.get('t', 100.0))[-1]),
                         int(config.seed), [initial_state(config, field)],
                         None if threshold is None else float(threshold))
    except ExtinctionError as error:
        if error.trace is not None:
            outcome.add(write_frame(error.trace, _output_path(config, 'smc-trace.csv')))
        raise
    outcome.add(write_frame(result.trace, _output_path(config, 'smc-trace.csv')))
    outcome.summary = {'lambda_hat': result.lambda_hat, 'std_error': result.std_error,
                       'log_total_mass': result.log_total_mass}
    outcome.add(write_json(outcome.summary, _output_path(config, 'smc.json')))


def cost(config: RunConfig, outcome: Outcome):
    field = build_field(config)
    r, v = initial_state(config, field)
    f = build_weight(config.run.get('cost_f', {'kind': 'constant', 'value': 1.0}), field, config, 'run.cost_f')
    g = build_weight(config.run.get('cost_g', {'kind': 'constant', 'value': 1.0}), field, config, 'run.cost_g')
    process = config.run.get('dynamics', 'nbp')
    k = int(as_list(config.run.get('k', 100))[-1])
    frame = cost_curve(field, f, g, as_list(config.run.get('t', 10.0)), r, v, k, int(config.seed), process,
                       _population_cap(config))
    outcome.add(write_frame(frame, _output_path(config, 'cost.csv')))


def eigenfunction_map(config: RunConfig, outcome: Outcome):
    field = build_field(config)
    reference = initial_state(config, field)
    section = config.ratio
    states = phase_grid(field, int(section.get('n_positions', 21)), int(section.get('n_directions', 8)))
    t = float(as_list(config.run.get('t', 10.0))[-1])
    k = int(as_list(config.run.get('k', 100))[-1])
    frame = ratio_map(field, build_weight(config.run.get('weight'), field, config), t, states, reference, k,
                      int(config.seed), section.get('estimator', 'br'))
    outcome.add(write_frame(frame, _output_path(config, 'ratio-map.csv')))
    outcome.summary = {'states': len(frame), 'undefined': int(frame['ratio'].isna().sum())}


def simulate(config: RunConfig, outcome: Outcome):
    '''
    Event dumps of k walks or forests.
    '''
    field = build_field(config)
    r, v = initial_state(config, field)
    horizon = float(as_list(config.run.get('t', 10.0))[-1])
    k = int(as_list(config.run.get('k', 1))[-1])
    seed = int(config.seed)
    frames = []
    if config.mode == 'nbp':
        for cycle in range(k):
            forest = simulate_nbp(field, [(r, v)], horizon, cycle_seed_sequence(seed, cycle), _population_cap(config))
            frames.append(forest.frame(cycle))
    elif config.mode in ('nrw', 'hnrw'):
        h = build_h(config, field) if config.mode == 'hnrw' else None
        for cycle in range(k):
            rng = cycle_generator(seed, cycle)
            path = (simulate_nrw(field, r, v, 0.0, horizon, rng) if h is None
                    else simulate_hnrw(field, h, r, v, horizon, rng))
            frames.append(path.events_frame(cycle))
    else:
        raise ConfigError(f'simulate needs mode nrw, nbp or hnrw, got {config.mode!r}', 'run.mode')
    outcome.add(write_frame(pd.concat(frames, ignore_index=True), _output_path(config, 'events.csv')))


def validate(config: RunConfig, outcome: Outcome):
    field = build_field(config)
    violations = field.validate()
    report = {'valid': not violations, 'violations': violations, 'regions': field.domain.n_regions,
              'beta_bounds': list(field.beta_bounds)}
    if config.h:
        h = build_h(config, field)
        report['h'] = {'variant': config.h.get('variant'), 'conservative': h.conservative,
                       'vanishes_on_boundary': h.vanishes_on_boundary}
    outcome.add(write_json(report, _output_path(config, 'validation.json')))
    outcome.summary = report
    if violations:
        raise ConfigError('; '.join(violations), 'materials')


MODE_COMMANDS = {
    'nrw': estimate_lambda, 'nbp': estimate_lambda, 'hnrw': estimate_lambda, 'smc': particle_filter,
    'slab-oracle': slab_oracle, 'plan-budget': plan, 'heatmap': heatmap, 'cost': cost,
    'ratio-map': eigenfunction_map,
}
COMMANDS = {
    'simulate': (simulate, None),
    'estimate-lambda': (estimate_lambda, None),
    'heatmap': (heatmap, 'heatmap'),
    'slab-oracle': (slab_oracle, 'slab-oracle'),
    'plan-budget': (plan, 'plan-budget'),
    'smc': (particle_filter, 'smc'),
    'validate-config': (validate, None),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='neutron_transport',
                                     description='Monte Carlo estimation of neutron transport eigenvalues.')
    parser.add_argument('--quiet', action='store_true', help='only log warnings and errors')
    parser.add_argument('--verbose', action='store_true', help='log debug messages')
    subparsers = parser.add_subparsers(dest='command', required=True)
    for name in ('run',) + tuple(COMMANDS):
        subparser = subparsers.add_parser(name)
        subparser.add_argument('config', help='TOML configuration file')
        subparser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                               help='override a configuration value, e.g. run.k=500')
        subparser.add_argument('--output-dir', help='override output.directory')
    return parser


def _configure_logging(args):
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s - %(levelname)s - %(message)s')
    if args.quiet:
        logging.disable(logging.INFO)


def _versions() -> dict:
    return {'neutron_transport': __version__, 'python': platform.python_version(), 'numpy': np.__version__,
            'scipy': scipy.__version__, 'pandas': pd.__version__, 'mesa': mesa.__version__}


def _fallback_manifest_path(args) -> Path:
    directory = Path(args.output_dir or 'results')
    return directory / f'{Path(args.config).stem}-manifest.json'


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    started = time.perf_counter()
    outcome = Outcome()
    manifest = {'command': args.command, 'config_path': str(args.config), 'overrides': args.overrides,
                'versions': _versions()}
    manifest_path = _fallback_manifest_path(args)
    overrides = list(args.overrides)
    if args.output_dir:
        overrides.append(f'output.directory={json.dumps(args.output_dir)}')

    try:
        if args.command == 'run':
            config = load_config(args.config, overrides)
            command = MODE_COMMANDS[config.mode]
        else:
            command, mode = COMMANDS[args.command]
            if mode is not None:
                overrides.append(f'run.mode="{mode}"')
            config = load_config(args.config, overrides)
        manifest.update({'config_digest': config.digest(), 'seed': config.seed, 'mode': config.mode})
        manifest_path = _output_path(config, 'manifest.json')
        command(config, outcome)
        exit_code = EXIT_EXTINCTION if outcome.undefined else EXIT_OK
        status = 'undefined' if outcome.undefined else 'ok'
        manifest['summary'] = outcome.summary
    except (ConfigError, DomainError) as error:
        exit_code, status = EXIT_CONFIG, 'config-error'
        manifest['error'] = {'type': type(error).__name__, 'message': str(error), 'key': getattr(error, 'key', None)}
    except ExtinctionError as error:
        exit_code, status = EXIT_EXTINCTION, 'extinction'
        manifest['error'] = {'type': type(error).__name__, 'message': str(error)}
    except PopulationCapError as error:
        exit_code, status = EXIT_POPULATION_CAP, 'population-cap'
        manifest['error'] = {'type': type(error).__name__, 'message': str(error)}
    except NeutronTransportError as error:
        logger.exception(f"Run failed: {error}")
        exit_code, status = EXIT_FAILURE, 'failure'
        manifest['error'] = {'type': type(error).__name__, 'message': str(error)}
    except Exception as error:
        logger.exception(f"Unexpected failure: {error}")
        exit_code, status = EXIT_FAILURE, 'failure'
        manifest['error'] = {'type': type(error).__name__, 'message': str(error)}

    manifest.update({'status': status, 'exit_code': exit_code, 'outputs': outcome.outputs,
                     'wall_time_seconds': time.perf_counter() - started})
    write_json(manifest, manifest_path)
    if 'error' in manifest:
        logger.error(f"{manifest['error']['type']}: {manifest['error']['message']}")
    logger.info(f"{args.command} finished with status {status}; outputs: {outcome.outputs}.")
    return exit_code


if __name__ == '__main__':
    sys.exit(main())
