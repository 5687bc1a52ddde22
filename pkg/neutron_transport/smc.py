'''
Particle filter for the principal eigenvalue.

A fixed-size ensemble is propagated over intervals of length delta under one
of three dynamics, each particle accumulating its Feynman-Kac log-weight;
the log mean weight is added to the running log-mass and the ensemble is
resampled multinomially. lambda_hat is the log-mass divided by elapsed time.
'''
import logging
import math

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
import pandas as pd

from mesa import Agent, Model
from mesa.datacollection import DataCollector
from scipy.special import logsumexp

from neutron_transport.exceptions import ConfigError, ExtinctionError
from neutron_transport.geometry import check_interior
from neutron_transport.htransform import HFunction, PoweredH, log_h_correction, simulate_hnrw
from neutron_transport.nbp import DEFAULT_POPULATION_CAP, alive_at, simulate_nbp
from neutron_transport.nrw import beta_integral, simulate_nrw
from neutron_transport.streams import particle_generator
from neutron_transport.xsection import CrossSectionField

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ['step', 'time', 'log_mass', 'ess', 'lambda_hat_running']

State = tuple[np.ndarray, np.ndarray]


class Dynamics(ABC):
    '''
    One propagation step of a particle together with its log-weight increment.
    '''
    field: CrossSectionField

    def __init__(self, field: CrossSectionField):
        self.field = field

    @abstractmethod
    def propagate(self, r: np.ndarray, v: np.ndarray, t0: float, duration: float,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, float] | None:
        '''
        New state and log-weight increment, or None when the particle is killed.
        '''

    def initial_log_weight(self, r, v) -> float:
        return 0.0

    def terminal_log_weight(self, r, v) -> float:
        return 0.0


class NrwDynamics(Dynamics):
    '''
    (alpha, pi) walk weighted by exp(int beta).
    '''

    def propagate(self, r, v, t0, duration, rng):
        path = simulate_nrw(self.field, r, v, t0, t0 + duration, rng)
        if path.exited:
            return None
        return path.end_position, path.end_velocity, beta_integral(path, self.field, path.t_end)


class HnrwDynamics(Dynamics):
    '''
    (alpha^h, pi^h) walk weighted by exp(int (Lh/h + beta)); the h-ratios of
    the start and the end of the run enter through the initial and terminal weights.
    '''

    def __init__(self, field: CrossSectionField, h: HFunction):
        super().__init__(field)
        self.h = h

    def propagate(self, r, v, t0, duration, rng):
        path = simulate_hnrw(self.field, self.h, r, v, t0 + duration, rng, t_start=t0)
        if path.exited:
            return None
        end_r, end_v = path.end_position, path.end_velocity
        correction = log_h_correction(path, self.field, self.h, path.t_end)
        increment = correction - math.log(self.h.value(r, v)) + math.log(self.h.value(end_r, end_v))
        return end_r, end_v, beta_integral(path, self.field, path.t_end) + increment

    def initial_log_weight(self, r, v):
        return math.log(self.h.value(r, v))

    def terminal_log_weight(self, r, v):
        return -math.log(self.h.value(r, v))


class NbpDynamics(Dynamics):
    '''
    A branching process from the particle over the interval; the weight is
    multiplied by the number of living descendants and the particle moves to
    one of them chosen uniformly.
    '''

    def __init__(self, field: CrossSectionField, population_cap: int = DEFAULT_POPULATION_CAP):
        super().__init__(field)
        self.population_cap = population_cap

    def propagate(self, r, v, t0, duration, rng):
        forest = simulate_nbp(self.field, [(r, v)], duration, rng, self.population_cap)
        descendants = alive_at(forest, duration)
        if not descendants:
            return None
        end_r, end_v = descendants[int(rng.integers(len(descendants)))]
        return end_r, end_v, math.log(len(descendants))


def make_dynamics(kind: str, field: CrossSectionField, h: HFunction | None = None, blend: float = 1.0,
                  population_cap: int = DEFAULT_POPULATION_CAP) -> Dynamics:
    '''
    Builds nrw, nbp or hnrw dynamics; blend < 1 uses the milder h ** blend.
    '''
    if kind == 'nrw':
        return NrwDynamics(field)
    if kind == 'nbp':
        return NbpDynamics(field, population_cap)
    if kind == 'hnrw':
        if h is None:
            raise ConfigError('hnrw dynamics need an h-function', 'h.variant')
        return HnrwDynamics(field, h if blend == 1.0 else PoweredH(h, blend))
    raise ConfigError(f'unknown dynamics {kind!r}', 'run.dynamics')


@dataclass
class ParticleEnsemble:
    '''
    Attributes:
    states (list[State]): Particle states (r, v).
    log_weights (np.ndarray): Log-weights, -inf for killed particles.
    log_total_mass (float): Running log-mass.
    time (float): Current time.
    '''
    states: list[State]
    log_weights: np.ndarray
    log_total_mass: float = 0.0
    time: float = 0.0

    def __len__(self):
        return len(self.states)


def effective_sample_size(ensemble: ParticleEnsemble) -> float:
    '''
    (sum w)^2 / sum w^2 from weights rescaled by their maximum.
    '''
    log_weights = np.asarray(ensemble.log_weights, dtype=float)
    if not np.any(np.isfinite(log_weights)):
        return 0.0
    weights = np.exp(log_weights - np.max(log_weights))
    return float(weights.sum() ** 2 / np.sum(weights ** 2))


def multinomial_resample(ensemble: ParticleEnsemble, rng: np.random.Generator) -> ParticleEnsemble:
    '''
    n draws proportional to the weights; the new ensemble has uniform weights.
    '''
    log_weights = np.asarray(ensemble.log_weights, dtype=float)
    if not np.any(np.isfinite(log_weights)):
        logger.error(f"Couldn't resample at t={ensemble.time}: total weight is zero.")
        raise ExtinctionError(f'total weight is zero at t={ensemble.time}')
    n = len(ensemble)
    probabilities = np.exp(log_weights - logsumexp(log_weights))
    counts = rng.multinomial(n, probabilities / probabilities.sum())
    indices = np.repeat(np.arange(n), counts)
    return ParticleEnsemble([ensemble.states[i] for i in indices], np.zeros(n),
                            ensemble.log_total_mass, ensemble.time)


class ParticleAgent(Agent):
    '''
    Attributes:
    position (np.ndarray): Current position.
    velocity (np.ndarray): Current velocity.
    log_weight (float): Log-weight accumulated since the last resampling.
    '''
    position: np.ndarray
    velocity: np.ndarray
    log_weight: float

    def __init__(self, model: Model, position, velocity, log_weight: float = 0.0):
        super().__init__(model)
        self.position = np.asarray(position, dtype=float).reshape(-1)
        self.velocity = np.asarray(velocity, dtype=float).reshape(-1)
        self.log_weight = log_weight

    def propagate(self, duration: float):
        if self.log_weight == -math.inf:
            return
        model = self.model
        rng = particle_generator(model.seed_value, model.step_index, self.unique_id)
        moved = model.dynamics.propagate(self.position, self.velocity, model.clock, duration, rng)
        if moved is None:
            self.log_weight = -math.inf
            logger.debug(f'[Particle {self.unique_id}] Killed during step {model.step_index}.')
            return
        self.position, self.velocity, increment = moved
        self.log_weight += increment


class ParticleFilterModel(Model):
    '''
    One step propagates every particle by delta, records the log mean weight
    and resamples.

    Attributes:
    dynamics (Dynamics): Particle motion and weights.
    delta (float): Resampling interval.
    horizon (float): Final time.
    ess_threshold (float | None): Resample only when ESS < threshold * n; None resamples every step.
    seed_value (int): Master seed of the per-particle streams.
    clock (float): Current time.
    step_index (int): Completed steps.
    log_total_mass (float): Running log-mass.
    ess (float): ESS before the last resampling.
    lambda_hat_running (float): log-mass / elapsed time.
    increments (list[float]): Per-step log-mass increments.
    ess_after_resample (list[float]): ESS right after each resampling.
    '''
    dynamics: Dynamics
    delta: float
    horizon: float
    ess_threshold: float | None
    clock: float
    step_index: int
    log_total_mass: float
    ess: float
    lambda_hat_running: float
    increments: list[float]
    seed_value: int
    ess_after_resample: list[float]
    datacollector: DataCollector

    def __init__(self, dynamics: Dynamics, initial: list[State], n_particles: int, delta: float, horizon: float,
                 seed: int = 0, ess_threshold: float | None = None):
        super().__init__(seed=seed)
        self.seed_value = int(seed)
        self.dynamics = dynamics
        self.delta = delta
        self.horizon = horizon
        self.ess_threshold = ess_threshold
        self.clock = 0.0
        self.step_index = 0
        self.log_total_mass = 0.0
        self.lambda_hat_running = 0.0
        self.increments = []
        self.ess_after_resample = []

        self.check_parameters(initial, n_particles)
        for i in range(n_particles):
            r, v = initial[i % len(initial)]
            ParticleAgent(self, r, v, dynamics.initial_log_weight(r, v))
        self.ess = float(n_particles)
        self.initialize_data_collector()

    def check_parameters(self, initial: list[State], n_particles: int):
        if n_particles < 2:
            logger.error(f"Couldn't start the particle filter with {n_particles} particles.")
            raise ConfigError(f'n_particles must be at least 2, got {n_particles}', 'run.n_particles')
        if not (self.delta > 0 and self.horizon > 0):
            logger.error(f"Couldn't start the particle filter with delta={self.delta}, horizon={self.horizon}.")
            raise ConfigError('delta and horizon must be positive', 'run.delta')
        if self.ess_threshold is not None and not 0 < self.ess_threshold <= 1:
            raise ConfigError(f'ess_threshold must lie in (0, 1], got {self.ess_threshold}', 'run.ess_threshold')
        if not initial:
            raise ConfigError('the initial configuration is empty', 'run.initial')
        for r, _ in initial:
            check_interior(self.dynamics.field.domain, np.asarray(r, dtype=float).reshape(-1), 'initial particle')

    def initialize_data_collector(self):
        self.datacollector = DataCollector(
            model_reporters={
                "step": "step_index",
                "time": "clock",
                "log_mass": "log_total_mass",
                "ess": "ess",
                "lambda_hat_running": "lambda_hat_running",
            }
        )

    def particles(self) -> list[ParticleAgent]:
        return sorted(self.agents, key=lambda agent: agent.unique_id)

    def ensemble(self) -> ParticleEnsemble:
        particles = self.particles()
        return ParticleEnsemble([(p.position, p.velocity) for p in particles],
                                np.array([p.log_weight for p in particles]), self.log_total_mass, self.clock)

    def trace(self) -> pd.DataFrame:
        return self.datacollector.get_model_vars_dataframe().reset_index(drop=True)[TRACE_COLUMNS]

    def _stop_condition(step) -> None:
        '''
        Stops the run at the horizon.
        '''
        def perform_step(self):
            if self.clock >= self.horizon:
                self.running = False
                logger.info(f"Particle filter reached t={self.clock} after {self.step_index} steps.")
            else:
                step(self)

        return perform_step

    @_stop_condition
    def step(self):
        duration = min(self.delta, self.horizon - self.clock)
        self.agents.do('propagate', duration)
        ensemble = self.ensemble()
        n = len(ensemble)
        if not np.any(np.isfinite(ensemble.log_weights)):
            logger.warning(f"Every particle was killed by t={self.clock + duration}.")
            raise ExtinctionError(f'all particles killed by t={self.clock + duration}', self.trace())

        increment = float(logsumexp(ensemble.log_weights) - math.log(n))
        self.log_total_mass += increment
        self.increments.append(increment)
        self.ess = effective_sample_size(ensemble)
        self.clock = self.clock + duration if self.horizon - self.clock - duration > 1e-12 else self.horizon
        self.step_index += 1

        if self.ess_threshold is None or self.ess < self.ess_threshold * n:
            resampled = multinomial_resample(ensemble, self.rng)
            for particle, (r, v) in zip(self.particles(), resampled.states):
                particle.position, particle.velocity, particle.log_weight = r, v, 0.0
            self.ess_after_resample.append(effective_sample_size(resampled))
        else:
            for particle in self.particles():
                particle.log_weight -= increment

        self.lambda_hat_running = self.log_total_mass / self.clock
        self.datacollector.collect(self)

    def terminal_log_correction(self) -> float:
        '''
        log of the weighted mean terminal weight (zero unless the dynamics use an h-function).
        '''
        particles = self.particles()
        terms = [p.log_weight + self.dynamics.terminal_log_weight(p.position, p.velocity)
                 for p in particles if p.log_weight > -math.inf]
        return float(logsumexp(terms) - math.log(len(particles)))


@dataclass
class SmcResult:
    '''
    Attributes:
    lambda_hat (float): Eigenvalue estimate.
    std_error (float): Approximate standard error from the spread of per-step increments.
    log_total_mass (float): Final log-mass (before the terminal correction).
    trace (pd.DataFrame): step, time, log_mass, ess, lambda_hat_running.
    ess_after_resample (list[float]): ESS after every resampling.
    '''
    lambda_hat: float
    std_error: float
    log_total_mass: float
    trace: pd.DataFrame
    ess_after_resample: list[float]


def _default_initial(field: CrossSectionField) -> list[State]:
    dim = field.domain.dim
    velocity = np.zeros(dim)
    velocity[0] = field.velocities.speed_max
    return [(np.zeros(dim), velocity)]


def smc_run(field: CrossSectionField, dynamics: Dynamics, n_particles: int, delta: float, horizon: float,
            rng: int = 0, initial: list[State] | None = None, ess_threshold: float | None = None) -> SmcResult:
    '''
    Runs the particle filter to the horizon.
    '''
    initial = _default_initial(field) if initial is None else initial
    seed = int(rng.integers(0, 2 ** 63 - 1)) if isinstance(rng, np.random.Generator) else int(rng)
    model = ParticleFilterModel(dynamics, initial, n_particles, delta, horizon, seed, ess_threshold)
    model.run_model()

    log_mass = model.log_total_mass + model.terminal_log_correction()
    lambda_hat = log_mass / horizon
    increments = np.array(model.increments)
    std_error = float(np.std(increments, ddof=1)) * math.sqrt(len(increments)) / horizon if len(increments) > 1 else 0.0
    logger.info(f"Particle filter ({type(dynamics).__name__}, n={n_particles}, delta={delta}): "
                f"lambda_hat={lambda_hat:.6f} +- {std_error:.6f}.")
    return SmcResult(lambda_hat, std_error, model.log_total_mass, model.trace(), model.ess_after_resample)
