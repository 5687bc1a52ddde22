'''
Monte Carlo estimators of the neutron transport semigroup psi_t[g](r, v) and
of its principal eigen-triple.

Three unbiased estimators share one reduction: the branching estimator
averages <g, X_t> over independent forests, the walk estimator averages
exp(int beta) g(R_t, V_t) over (alpha, pi) walks, and the h-walk estimator
averages the Doob-transformed weight. Weights are kept in log space and
k-sample means are taken with logsumexp.
'''
import logging
import math

from abc import ABC, abstractmethod
from dataclasses import dataclass, field as dataclass_field
from typing import Callable, Literal

import numpy as np
import pandas as pd

from mesa.experimental.cell_space import PropertyLayer
from scipy.special import logsumexp
from scipy.stats import linregress

from neutron_transport.cost import CostCounters
from neutron_transport.exceptions import ConfigError
from neutron_transport.geometry import Domain, Interval1D, check_interior
from neutron_transport.htransform import HFunction, log_h_correction, log_product_correction, simulate_hnrw
from neutron_transport.nbp import DEFAULT_POPULATION_CAP, NbpForest, alive_at, simulate_nbp
from neutron_transport.nrw import NrwPath, beta_integral, simulate_nrw
from neutron_transport.slab1d import SlabEigen
from neutron_transport.streams import cycle_generator, cycle_seed_sequence, spawn_seed
from neutron_transport.xsection import CrossSectionField

logger = logging.getLogger(__name__)

Method = Literal['br', 'rw']


class WeightFunction(ABC):
    '''
    Bounded non-negative g on D x V.
    '''
    bound: float

    @abstractmethod
    def __call__(self, r, v) -> float: ...

    def vanishes_on_boundary(self, domain: Domain) -> bool:
        '''
        True when g / h stays bounded for any h vanishing linearly on the outgoing boundary.
        '''
        return False


@dataclass(frozen=True)
class ConstantWeight(WeightFunction):
    value: float = 1.0

    def __post_init__(self):
        if not self.value >= 0:
            raise ConfigError(f'weight must be non-negative, got {self.value}', 'run.g')

    @property
    def bound(self) -> float:
        return self.value

    def __call__(self, r, v):
        return self.value

    def vanishes_on_boundary(self, domain):
        return self.value == 0


@dataclass(frozen=True)
class BoxIndicator(WeightFunction):
    '''
    Indicator of lower <= r <= upper, optionally restricted to velocities whose
    first component has the sign of `direction`.
    '''
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    direction: int | None = None
    bound: float = 1.0

    def __post_init__(self):
        if len(self.lower) != len(self.upper) or any(a > b for a, b in zip(self.lower, self.upper)):
            raise ConfigError(f'invalid box [{self.lower}, {self.upper}]', 'run.g')

    def __call__(self, r, v):
        r = np.asarray(r, dtype=float).reshape(-1)
        if np.any(r < self.lower) or np.any(r > self.upper):
            return 0.0
        if self.direction is not None and np.sign(np.asarray(v, dtype=float).reshape(-1)[0]) != self.direction:
            return 0.0
        return 1.0

    def vanishes_on_boundary(self, domain):
        corners = [np.array(self.lower), np.array(self.upper)]
        if domain.dim == 2:
            corners += [np.array([self.lower[0], self.upper[1]]), np.array([self.upper[0], self.lower[1]])]
        return all(domain.contains(c) for c in corners)


@dataclass(frozen=True)
class PhiWeight(WeightFunction):
    '''
    The analytic slab eigenfunction.
    '''
    eigen: SlabEigen

    @property
    def bound(self) -> float:
        return self.eigen.profile_max

    def __call__(self, r, v):
        return self.eigen.phi(r, v)

    def vanishes_on_boundary(self, domain):
        return True


@dataclass(frozen=True)
class FunctionWeight(WeightFunction):
    fn: Callable[[np.ndarray, np.ndarray], float]
    bound: float
    vanishes: bool = False

    def __call__(self, r, v):
        return float(self.fn(r, v))

    def vanishes_on_boundary(self, domain):
        return self.vanishes


@dataclass
class EstimatorResult:
    '''
    Attributes:
    value (float): Psi_k[g](t, r, v).
    std_error (float): Standard error of the k-sample mean.
    k (int): Number of cycles.
    t (float): Horizon.
    survivors (int): Cycles with a nonzero contribution.
    cost (CostCounters): Simulation cost accumulated over the cycles.
    log_value (float): log of value, -inf when value is zero.
    samples (np.ndarray): Per-cycle contributions.
    '''
    value: float
    std_error: float
    k: int
    t: float
    survivors: int
    cost: CostCounters = dataclass_field(default_factory=CostCounters)
    log_value: float = -math.inf
    samples: np.ndarray = dataclass_field(default_factory=lambda: np.zeros(0), repr=False)


@dataclass(frozen=True)
class LambdaEstimate:
    '''
    (1/t) log Psi, undefined when every cycle contributed zero.
    '''
    value: float | None
    std_error: float | None
    t: float
    survivors: int

    @property
    def defined(self) -> bool:
        return self.value is not None


@dataclass(frozen=True)
class RatioEstimate:
    value: float | None
    numerator: EstimatorResult
    denominator: EstimatorResult

    @property
    def defined(self) -> bool:
        return self.value is not None


def master_seed(rng) -> int:
    '''
    Master seed of a run; cycle i uses the stream keyed by (seed, i).
    '''
    if isinstance(rng, np.random.Generator):
        return spawn_seed(rng)
    if rng is None:
        raise ConfigError('a seed is required for simulation', 'run.seed')
    return int(rng)


def reduce_log_weights(log_weights: np.ndarray, t: float, cost: CostCounters | None = None) -> EstimatorResult:
    '''
    Mean and standard error of exp(log_weights) without leaving log space for the mean.
    '''
    log_weights = np.asarray(log_weights, dtype=float)
    k = len(log_weights)
    cost = CostCounters() if cost is None else cost
    alive = np.isfinite(log_weights)
    survivors = int(alive.sum())
    if survivors == 0:
        return EstimatorResult(0.0, 0.0, k, t, 0, cost, -math.inf, np.zeros(k))
    peak = float(np.max(log_weights[alive]))
    log_value = float(logsumexp(log_weights) - math.log(k))
    scaled = np.exp(log_weights - peak)
    std_error = math.exp(peak) * float(np.std(scaled, ddof=1)) / math.sqrt(k) if k > 1 else 0.0
    return EstimatorResult(math.exp(log_value), std_error, k, t, survivors, cost, log_value, np.exp(log_weights))


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _initial_state(field: CrossSectionField, r, v) -> tuple[np.ndarray, np.ndarray]:
    r = np.asarray(r, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    check_interior(field.domain, r, 'estimator start')
    field.velocities.check(v, 'run.v')
    return r, v


def _check_times(times) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if len(times) == 0 or np.any(times < 0):
        raise ConfigError(f'sample times must be non-negative, got {times.tolist()}', 'run.t')
    return times


def _check_cycles(k: int):
    if k < 1:
        logger.error(f"Couldn't run an estimator with k={k} cycles.")
        raise ConfigError(f'k must be at least 1, got {k}', 'run.k')


def walk_alive(path: NrwPath, t: float) -> bool:
    return t < path.t_end or (t == path.t_end and not path.exited)


def branching_sums(field: CrossSectionField, weights: list[WeightFunction], times, r, v, k: int, rng,
                   population_cap: int = DEFAULT_POPULATION_CAP) -> tuple[np.ndarray, CostCounters]:
    '''
    <g, X_s> for every cycle, weight function and sample time.
    One forest per cycle is grown to max(times). Returns shape (k, len(weights), len(times)).
    '''
    r, v = _initial_state(field, r, v)
    times = _check_times(times)
    _check_cycles(k)
    seed = master_seed(rng)
    horizon = float(times.max())
    sums = np.zeros((k, len(weights), len(times)))
    cost = CostCounters()
    for cycle in range(k):
        if horizon == 0:
            sums[cycle] = [[g(r, v)] * len(times) for g in weights]
            cost.particles_created += 1
            continue
        forest = simulate_nbp(field, [(r, v)], horizon, cycle_seed_sequence(seed, cycle), population_cap)
        cost = cost + _forest_cost(forest)
        for j, s in enumerate(times):
            states = alive_at(forest, s) if s > 0 else [(r, v)]
            for i, g in enumerate(weights):
                sums[cycle, i, j] = sum(g(x, u) for x, u in states)
    return sums, cost


def _forest_cost(forest: NbpForest) -> CostCounters:
    return CostCounters(scatter_events=sum(traj.path.n_scatters for traj in forest.trajectories),
                        particles_created=len(forest))


def psi_br_curve(field, g: WeightFunction, times, r, v, k: int, rng,
                 population_cap: int = DEFAULT_POPULATION_CAP) -> list[EstimatorResult]:
    '''
    Branching estimator at several times along the same forests.
    '''
    sums, cost = branching_sums(field, [g], times, r, v, k, rng, population_cap)
    with np.errstate(divide='ignore'):
        logs = np.log(sums[:, 0, :])
    return [reduce_log_weights(logs[:, j], float(s), cost) for j, s in enumerate(_check_times(times))]


def psi_br(field, g: WeightFunction, t: float, r, v, k: int, rng,
           population_cap: int = DEFAULT_POPULATION_CAP) -> EstimatorResult:
    '''
    (1/k) sum_i <g, X^i_t> over k independent branching processes started from (r, v).
    '''
    return psi_br_curve(field, g, [t], r, v, k, rng, population_cap)[0]


def _walk_log_weights(field, g: WeightFunction, times, r, v, k: int, rng,
                      potential: float = 1.0, power: float = 1.0) -> tuple[np.ndarray, CostCounters]:
    '''
    log of exp(potential int beta) g^power at each sample time for k (alpha, pi) walks.
    '''
    r, v = _initial_state(field, r, v)
    times = _check_times(times)
    _check_cycles(k)
    seed = master_seed(rng)
    horizon = float(times.max())
    logs = np.full((k, len(times)), -math.inf)
    cost = CostCounters()
    for cycle in range(k):
        cost.particles_created += 1
        if horizon == 0:
            logs[cycle] = power * _log(g(r, v))
            continue
        path = simulate_nrw(field, r, v, 0.0, horizon, cycle_generator(seed, cycle))
        cost.scatter_events += path.n_scatters
        for j, s in enumerate(times):
            if not walk_alive(path, s):
                continue
            weight = g(*path.state_at(s))
            if weight > 0:
                logs[cycle, j] = beta_integral(path, field, s, potential) + power * math.log(weight)
    return logs, cost


def psi_rw_curve(field, g: WeightFunction, times, r, v, k: int, rng) -> list[EstimatorResult]:
    logs, cost = _walk_log_weights(field, g, times, r, v, k, rng)
    return [reduce_log_weights(logs[:, j], float(s), cost) for j, s in enumerate(_check_times(times))]


def psi_rw(field, g: WeightFunction, t: float, r, v, k: int, rng) -> EstimatorResult:
    '''
    (1/k) sum_i exp(int_0^t beta) g(R^i_t, V^i_t) 1(t < t^i_end) over (alpha, pi) walks.
    '''
    return psi_rw_curve(field, g, [t], r, v, k, rng)[0]


def check_weight_against_h(field: CrossSectionField, h: HFunction, g: WeightFunction):
    if h.vanishes_on_boundary and not g.vanishes_on_boundary(field.domain):
        logger.error("Weight function does not vanish where h does: g/h is unbounded near the boundary.")
        raise ConfigError('g/h is unbounded near the boundary; use a lifted h or a g with interior support',
                          'h.variant')


def _h_walk_log_weights(field, h: HFunction, g: WeightFunction, times, r, v, k: int, rng,
                        correction) -> tuple[np.ndarray, CostCounters]:
    r, v = _initial_state(field, r, v)
    times = _check_times(times)
    _check_cycles(k)
    check_weight_against_h(field, h, g)
    seed = master_seed(rng)
    horizon = float(times.max())
    logs = np.full((k, len(times)), -math.inf)
    cost = CostCounters()
    for cycle in range(k):
        cost.particles_created += 1
        if horizon == 0:
            logs[cycle] = _log(g(r, v))
            continue
        path = simulate_hnrw(field, h, r, v, horizon, cycle_generator(seed, cycle))
        cost.scatter_events += path.n_scatters
        for j, s in enumerate(times):
            if not walk_alive(path, s):
                continue
            weight = g(*path.state_at(s))
            if weight > 0:
                logs[cycle, j] = beta_integral(path, field, s) + math.log(weight) + correction(path, field, h, s)
    return logs, cost


def psi_hrw_curve(field, h: HFunction, g: WeightFunction, times, r, v, k: int, rng) -> list[EstimatorResult]:
    logs, cost = _h_walk_log_weights(field, h, g, times, r, v, k, rng, log_h_correction)
    return [reduce_log_weights(logs[:, j], float(s), cost) for j, s in enumerate(_check_times(times))]


def psi_hrw(field, h: HFunction, g: WeightFunction, t: float, r, v, k: int, rng) -> EstimatorResult:
    '''
    h(r, v) (1/k) sum_i exp(int_0^t (Lh/h + beta)) (g/h)(R^i_t, V^i_t) 1(t < t^i_end)
    over walks under (alpha^h, pi^h).
    '''
    return psi_hrw_curve(field, h, g, [t], r, v, k, rng)[0]


def psi_hrw_product(field, h: HFunction, g: WeightFunction, t: float, r, v, k: int, rng) -> EstimatorResult:
    '''
    The h-walk estimator with the jump-product form of the weight; same paths as psi_hrw.
    '''
    logs, cost = _h_walk_log_weights(field, h, g, [t], r, v, k, rng, log_product_correction)
    return reduce_log_weights(logs[:, 0], float(t), cost)


def lambda_estimate(result: EstimatorResult) -> LambdaEstimate:
    '''
    lambda_hat = log(Psi) / t with a delta-method standard error.
    '''
    if not result.t > 0:
        raise ConfigError(f'lambda estimate needs t > 0, got {result.t}', 'run.t')
    if result.value <= 0 or not math.isfinite(result.log_value):
        logger.warning(f"Estimate is zero at t={result.t} ({result.survivors}/{result.k} survivors): "
                       f"lambda is undefined.")
        return LambdaEstimate(None, None, result.t, result.survivors)
    std_error = result.std_error / (result.value * result.t)
    return LambdaEstimate(result.log_value / result.t, std_error, result.t, result.survivors)


def lambda_curve(results: list[EstimatorResult]) -> pd.DataFrame:
    '''
    lambda_hat(t) along a time grid; results at t = 0 are skipped.
    '''
    rows = []
    for result in results:
        if result.t <= 0:
            continue
        estimate = lambda_estimate(result)
        rows.append({'t': result.t, 'k': result.k, 'value': result.value, 'std_error': result.std_error,
                     'survivors': result.survivors, 'lambda_hat': estimate.value,
                     'lambda_std_error': estimate.std_error})
    return pd.DataFrame(rows, columns=['t', 'k', 'value', 'std_error', 'survivors', 'lambda_hat',
                                       'lambda_std_error'])


def _estimate(method: Method, field, g, t, r, v, k, seed) -> EstimatorResult:
    if method == 'br':
        return psi_br(field, g, t, r, v, k, seed)
    if method == 'rw':
        return psi_rw(field, g, t, r, v, k, seed)
    raise ConfigError(f'unknown estimator {method!r}', 'run.estimator')


def eigenfunction_ratio(field, g: WeightFunction, t: float, state, reference, k: int, rng,
                        method: Method = 'br', common_random_numbers: bool = True) -> RatioEstimate:
    '''
    Psi_k[g](t, state) / Psi_k[g](t, reference), proportional to phi(state) for large t.
    '''
    seed = master_seed(rng)
    numerator = _estimate(method, field, g, t, *state, k, seed)
    denominator = _estimate(method, field, g, t, *reference, k, seed if common_random_numbers else seed + 1)
    if denominator.value <= 0:
        logger.warning(f"Reference estimate is zero at t={t}: eigenfunction ratio is undefined.")
        return RatioEstimate(None, numerator, denominator)
    return RatioEstimate(numerator.value / denominator.value, numerator, denominator)


def ratio_map(field, g: WeightFunction, t: float, states: list, reference, k: int, rng,
              method: Method = 'br') -> pd.DataFrame:
    '''
    Eigenfunction ratios over a list of states, one row per state.
    '''
    seed = master_seed(rng)
    rows = []
    for r, v in states:
        estimate = eigenfunction_ratio(field, g, t, (r, v), reference, k, seed, method)
        r, v = np.asarray(r, dtype=float).reshape(-1), np.asarray(v, dtype=float).reshape(-1)
        rows.append({'rx': r[0], 'ry': r[1] if len(r) > 1 else 0.0, 'vx': v[0], 'vy': v[1] if len(v) > 1 else 0.0,
                     'ratio': estimate.value})
    return pd.DataFrame(rows, columns=['rx', 'ry', 'vx', 'vy', 'ratio'])


def left_inner(field, g: WeightFunction, t: float, r, v, k: int, rng,
               population_cap: int = DEFAULT_POPULATION_CAP) -> float | None:
    '''
    Psi_k[g] / Psi_k[1] on shared forests; tends to <g, phi_tilde> with <1, phi_tilde> = 1.
    '''
    sums, _ = branching_sums(field, [g, ConstantWeight(1.0)], [t], r, v, k, rng, population_cap)
    total = float(sums[:, 1, 0].sum())
    if total == 0:
        logger.warning(f"Every forest is extinct at t={t}: left inner product is undefined.")
        return None
    return float(sums[:, 0, 0].sum()) / total


def left_inner_single(field, g: WeightFunction, t: float, r, v, rng,
                      population_cap: int = DEFAULT_POPULATION_CAP) -> float | None:
    '''
    <g, X_t> / <1, X_t> for a single forest.
    '''
    return left_inner(field, g, t, r, v, 1, rng, population_cap)


@dataclass(frozen=True)
class OccupationBins:
    '''
    Partition of D x V into a position grid times velocity sectors.

    Attributes:
    domain (Domain): Spatial domain.
    nx (int): Bins along x.
    ny (int): Bins along y (1 in 1D).
    n_sectors (int): Velocity sectors (sign of v in 1D, angle sectors in 2D).
    '''
    domain: Domain
    nx: int
    ny: int = 1
    n_sectors: int = 1

    def __post_init__(self):
        if min(self.nx, self.ny, self.n_sectors) < 1:
            raise ConfigError(f'bin counts must be positive, got ({self.nx}, {self.ny}, {self.n_sectors})', 'heatmap')

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.nx, self.ny, self.n_sectors

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        if isinstance(self.domain, Interval1D):
            L = self.domain.halfwidth
            return np.linspace(-L, L, self.nx + 1), np.array([-0.5, 0.5])
        return (np.linspace(-self.domain.half_x, self.domain.half_x, self.nx + 1),
                np.linspace(-self.domain.half_y, self.domain.half_y, self.ny + 1))

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        x_edges, y_edges = self.edges()
        return 0.5 * (x_edges[1:] + x_edges[:-1]), 0.5 * (y_edges[1:] + y_edges[:-1])

    def index(self, r: np.ndarray, v: np.ndarray) -> tuple[int, int, int]:
        x_edges, y_edges = self.edges()
        ix = int(np.clip(np.searchsorted(x_edges, r[0], side='right') - 1, 0, self.nx - 1))
        iy = int(np.clip(np.searchsorted(y_edges, r[1], side='right') - 1, 0, self.ny - 1)) if len(r) > 1 else 0
        if self.n_sectors == 1:
            sector = 0
        elif len(v) == 1:
            sector = int(v[0] > 0)
        else:
            sector = int((math.atan2(v[1], v[0]) % (2 * math.pi)) // (2 * math.pi / self.n_sectors)) % self.n_sectors
        return ix, iy, sector


@dataclass
class OccupationHistogram:
    '''
    Attributes:
    bins (OccupationBins): The partition.
    layer (PropertyLayer): Per-bin values, shape (nx, ny, n_sectors).
    std_error (np.ndarray): Per-bin standard errors over cycles.
    t (float): Horizon.
    n_times (int): Number M of sample times.
    k (int): Cycles.
    '''
    bins: OccupationBins
    layer: PropertyLayer
    std_error: np.ndarray
    t: float
    n_times: int
    k: int

    @property
    def values(self) -> np.ndarray:
        return self.layer.data

    def position_marginal(self) -> np.ndarray:
        return self.values.sum(axis=(1, 2))


def occupation_histogram(field: CrossSectionField, bins: OccupationBins, t: float, n_times: int, k: int, rng,
                         r, v, method: Method = 'br',
                         population_cap: int = DEFAULT_POPULATION_CAP) -> OccupationHistogram:
    '''
    (1/M) sum_m Psi_k[1_B](m t / M, r, v) for every bin B in a single pass over
    the simulated forests (or walks, weighted by exp(int beta)).
    Summing over bins gives (1/M) sum_m Psi_k[1](m t / M).
    '''
    r, v = _initial_state(field, r, v)
    _check_cycles(k)
    if not (t > 0 and n_times >= 1):
        raise ConfigError(f'need t > 0 and M >= 1, got t={t}, M={n_times}', 'heatmap')
    seed = master_seed(rng)
    times = t * np.arange(1, n_times + 1) / n_times
    per_cycle = np.zeros((k,) + bins.shape)
    for cycle in range(k):
        counts = per_cycle[cycle]
        if method == 'br':
            forest = simulate_nbp(field, [(r, v)], t, cycle_seed_sequence(seed, cycle), population_cap)
            for s in times:
                for x, u in alive_at(forest, s):
                    counts[bins.index(x, u)] += 1.0
        elif method == 'rw':
            path = simulate_nrw(field, r, v, 0.0, t, cycle_generator(seed, cycle))
            for s in times:
                if walk_alive(path, s):
                    counts[bins.index(*path.state_at(s))] += math.exp(beta_integral(path, field, s))
        else:
            raise ConfigError(f'unknown estimator {method!r}', 'heatmap.estimator')
    per_cycle /= n_times
    layer = PropertyLayer('occupation', bins.shape, 0.0, float)
    layer.data = per_cycle.mean(axis=0)
    std_error = per_cycle.std(axis=0, ddof=1) / math.sqrt(k) if k > 1 else np.zeros(bins.shape)
    logger.info(f"Occupation histogram over {bins.shape} bins: total mass {layer.data.sum():.6g}.")
    return OccupationHistogram(bins, layer, std_error, t, n_times, k)


@dataclass(frozen=True)
class MartingalePoint:
    t: float
    mean: float
    std_error: float


def martingale_diag(field, phi: WeightFunction, lam: float, times, r, v, k: int, rng,
                    population_cap: int = DEFAULT_POPULATION_CAP) -> list[MartingalePoint]:
    '''
    Empirical mean of W_t = exp(-lam t) <phi, X_t> / phi(r, v) on a time grid.
    '''
    r, v = _initial_state(field, r, v)
    start = phi(r, v)
    if not start > 0:
        logger.error(f"Martingale diagnostic needs phi > 0 at the start, got {start}.")
        raise ConfigError('phi vanishes at the initial state', 'run.r')
    times = _check_times(times)
    sums, _ = branching_sums(field, [phi], times, r, v, k, rng, population_cap)
    points = []
    for j, s in enumerate(times):
        if s == 0:
            points.append(MartingalePoint(0.0, 1.0, 0.0))
            continue
        w = math.exp(-lam * s) * sums[:, 0, j] / start
        std_error = float(np.std(w, ddof=1)) / math.sqrt(k) if k > 1 else 0.0
        points.append(MartingalePoint(float(s), float(w.mean()), std_error))
    return points


@dataclass(frozen=True)
class SecondMomentRate:
    '''
    Attributes:
    lambda_one (float): Fitted growth rate of E[exp(2 int beta) g^2 1(t < end)].
    lambda_hat (float): Fitted growth rate of the first moment on the same walks.
    beta_min (float): inf beta.
    beta_max (float): sup beta.
    within_bounds (bool): max(2 lambda, lambda + beta_min) - tol <= lambda_one <= lambda + beta_max + tol.
    '''
    lambda_one: float
    lambda_hat: float
    beta_min: float
    beta_max: float
    within_bounds: bool


def second_moment_rate(field, g: WeightFunction, times, r, v, k: int, rng, lambda_star: float | None = None,
                       tolerance: float = 0.1) -> SecondMomentRate:
    '''
    Log-linear growth rates of the first and second moments of the walk
    weight; the sandwich check uses lambda_star when given, else the fitted
    first-moment rate.
    '''
    times = _check_times(times)
    if np.any(times <= 0) or len(times) < 2:
        raise ConfigError('second-moment fit needs at least two positive times', 'run.t')
    seed = master_seed(rng)
    first, _ = _walk_log_weights(field, g, times, r, v, k, seed)
    second, _ = _walk_log_weights(field, g, times, r, v, k, seed, potential=2.0, power=2.0)
    log_first = logsumexp(first, axis=0) - math.log(k)
    log_second = logsumexp(second, axis=0) - math.log(k)
    if not (np.all(np.isfinite(log_first)) and np.all(np.isfinite(log_second))):
        logger.warning('Every walk died before the last sample time: growth rates are undefined.')
        raise ConfigError('all walks died; shorten the time grid or raise k', 'run.t')
    lambda_hat = linregress(times, log_first).slope
    lambda_one = linregress(times, log_second).slope
    beta_min, beta_max = field.beta_bounds
    reference = lambda_hat if lambda_star is None else lambda_star
    lower = max(2.0 * reference, reference + beta_min) - tolerance
    upper = reference + beta_max + tolerance
    within = lower <= lambda_one <= upper
    logger.info(f"Second-moment rate {lambda_one:.4f} in [{lower:.4f}, {upper:.4f}]: {within}.")
    return SecondMomentRate(float(lambda_one), float(lambda_hat), beta_min, beta_max, bool(within))
