'''
Parameter sweeps of the eigenvalue estimators through mesa.batchrunner.batch_run.

Each LambdaEstimationModel runs one estimator once, for one (t, k, seed)
combination, so batch_run provides the worker pool over the sweep.
'''
import logging
import os

from dataclasses import dataclass

import numpy as np
import pandas as pd

from mesa import Model
from mesa.batchrunner import batch_run
from mesa.datacollection import DataCollector

from neutron_transport.exceptions import ConfigError
from neutron_transport.estimators import EstimatorResult, WeightFunction, lambda_estimate, psi_br, psi_hrw, psi_rw
from neutron_transport.htransform import HFunction
from neutron_transport.nbp import DEFAULT_POPULATION_CAP
from neutron_transport.xsection import CrossSectionField

logger = logging.getLogger(__name__)

WORKERS_ENV = 'NEUTRON_TRANSPORT_WORKERS'
ESTIMATORS = ('br', 'rw', 'hrw')
SWEEP_COLUMNS = ['estimator', 't', 'k', 'value', 'std_error', 'survivors', 'lambda_hat', 'lambda_std_error',
                 'seed', 'scatter_events', 'particles_created']


def default_workers() -> int:
    '''
    Worker processes for sweeps, from NEUTRON_TRANSPORT_WORKERS (default 1).
    '''
    raw = os.environ.get(WORKERS_ENV, '1')
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f'{WORKERS_ENV}={raw!r} is not an integer', WORKERS_ENV)
    if workers < 1:
        raise ConfigError(f'{WORKERS_ENV} must be at least 1, got {workers}', WORKERS_ENV)
    return workers


@dataclass(frozen=True)
class EstimationSetup:
    '''
    Everything an estimator run needs apart from (t, k, seed).

    Attributes:
    field (CrossSectionField): Cross-sections.
    r (tuple[float, ...]): Initial position.
    v (tuple[float, ...]): Initial velocity.
    weight (WeightFunction): g.
    h (HFunction | None): Importance function of the h-walk estimator.
    population_cap (int): Branching population cap.
    '''
    field: CrossSectionField
    r: tuple[float, ...]
    v: tuple[float, ...]
    weight: WeightFunction
    h: HFunction | None = None
    population_cap: int = DEFAULT_POPULATION_CAP


def run_estimator(setup: EstimationSetup, estimator: str, t: float, k: int, seed: int) -> EstimatorResult:
    if estimator == 'br':
        return psi_br(setup.field, setup.weight, t, setup.r, setup.v, k, seed, setup.population_cap)
    if estimator == 'rw':
        return psi_rw(setup.field, setup.weight, t, setup.r, setup.v, k, seed)
    if estimator == 'hrw':
        if setup.h is None:
            raise ConfigError('the h-walk estimator needs an h-function', 'h.variant')
        return psi_hrw(setup.field, setup.h, setup.weight, t, setup.r, setup.v, k, seed)
    raise ConfigError(f'unknown estimator {estimator!r}; expected one of {ESTIMATORS}', 'run.mode')


class LambdaEstimationModel(Model):
    '''
    One step runs the estimator and stops the model.

    Attributes:
    setup (EstimationSetup): Estimator inputs.
    t (float): Horizon.
    k (int): Cycles.
    estimator (str): "br", "rw" or "hrw".
    seed_value (int): Master seed of the cycles.
    result (EstimatorResult | None): Filled by step().
    lambda_hat (float | None): Eigenvalue estimate, None when undefined.
    '''
    setup: EstimationSetup
    t: float
    k: int
    estimator: str
    seed_value: int
    result: EstimatorResult | None
    lambda_hat: float | None
    lambda_std_error: float | None
    datacollector: DataCollector

    def __init__(self, setup: EstimationSetup, t: float, k: int, estimator: str = 'br', seed: int = 0, rng=None):
        seed = seed if rng is None else int(rng)
        super().__init__(seed=seed)
        self.setup = setup
        self.t = float(t)
        self.k = int(k)
        self.estimator = estimator
        self.seed_value = int(seed)
        self.result = None
        self.lambda_hat = None
        self.lambda_std_error = None
        self.initialize_data_collector()

    def initialize_data_collector(self):
        self.datacollector = DataCollector(
            model_reporters={
                "estimator": "estimator",
                "value": lambda model: model.result.value,
                "std_error": lambda model: model.result.std_error,
                "survivors": lambda model: model.result.survivors,
                "lambda_hat": "lambda_hat",
                "lambda_std_error": "lambda_std_error",
                "scatter_events": lambda model: model.result.cost.scatter_events,
                "particles_created": lambda model: model.result.cost.particles_created,
            }
        )

    def step(self):
        self.result = run_estimator(self.setup, self.estimator, self.t, self.k, self.seed_value)
        estimate = lambda_estimate(self.result)
        self.lambda_hat, self.lambda_std_error = estimate.value, estimate.std_error
        logger.info(f"[{self.estimator} t={self.t} k={self.k} seed={self.seed_value}] "
                    f"value={self.result.value:.6g}, lambda_hat={self.lambda_hat}.")
        self.datacollector.collect(self)
        self.running = False


def lambda_sweep(setup: EstimationSetup, times, ks, estimator: str, seed: int, iterations: int = 1,
                 number_processes: int | None = None, display_progress: bool = False) -> pd.DataFrame:
    '''
    lambda_hat over the grid times x ks, with `iterations` independent seeds
    (seed, seed + 1, ...) per grid point. Rows are sorted by (t, k, seed).
    '''
    if estimator not in ESTIMATORS:
        raise ConfigError(f'unknown estimator {estimator!r}', 'run.mode')
    if iterations < 1:
        raise ConfigError(f'iterations must be at least 1, got {iterations}', 'run.iterations')
    results = batch_run(
        model_cls=LambdaEstimationModel,
        parameters={
            "setup": setup,
            "t": [float(t) for t in np.atleast_1d(times)],
            "k": [int(k) for k in np.atleast_1d(ks)],
            "estimator": estimator,
            "seed": [seed + i for i in range(iterations)],
        },
        iterations=1,
        max_steps=1,
        number_processes=number_processes or default_workers(),
        data_collection_period=1,
        display_progress=display_progress,
    )
    frame = pd.DataFrame(results)
    frame = frame.sort_values(['t', 'k', 'seed'], kind='stable').reset_index(drop=True)
    return frame[SWEEP_COLUMNS]
