'''
Simulation cost processes, their compensators and the complexity-optimal budget planner.

For a forest, C_t[f, g] adds g at every birth up to t and f at every scatter
(evaluated after the velocity change) up to t. Its compensator is
A_t = int_0^t <sigma_s pi_s[f] + sigma_f pi_f[g], X_s> ds, so that
C_t - C_0 - A_t is a mean-zero martingale (roots are not compensated).
'''
import logging
import math

from dataclasses import dataclass, asdict
from typing import Callable, Literal

import numpy as np
import pandas as pd

from scipy.optimize import brentq

from neutron_transport.exceptions import ConfigError
from neutron_transport.nbp import DEFAULT_POPULATION_CAP, simulate_nbp
from neutron_transport.nrw import NrwPath, integrate_along, simulate_nrw
from neutron_transport.streams import cycle_generator, cycle_seed_sequence
from neutron_transport.xsection import CrossSectionField

logger = logging.getLogger(__name__)

BudgetRegime = Literal['critical', 'supercritical', 'subcritical', 'nrw', 'h_nrw']
StateFunction = Callable[[np.ndarray, np.ndarray], float]

CRITICAL_TOLERANCE = 1e-12


@dataclass
class CostCounters:
    '''
    Attributes:
    scatter_events (int): Scatters up to t (CPU proxy).
    particles_created (int): Births up to t, roots included (memory proxy).
    weighted_cost (float): C_t[f, g].
    compensator (float): A_t.
    initial_cost (float): C_0[f, g], the root contribution.
    '''
    scatter_events: int = 0
    particles_created: int = 0
    weighted_cost: float = 0.0
    compensator: float = 0.0
    initial_cost: float = 0.0

    def __add__(self, other: 'CostCounters') -> 'CostCounters':
        return CostCounters(self.scatter_events + other.scatter_events,
                            self.particles_created + other.particles_created,
                            self.weighted_cost + other.weighted_cost,
                            self.compensator + other.compensator,
                            self.initial_cost + other.initial_cost)

    @property
    def martingale(self) -> float:
        return self.weighted_cost - self.initial_cost - self.compensator


def _kernel_action(kernel, v: np.ndarray, r: np.ndarray, fn: StateFunction, n_angle: int) -> float:
    nodes, probs = kernel.nodes(v, n_angle)
    return float(sum(p * fn(r, u) for u, p in zip(nodes, probs)))


def _nbp_cost_rate(field: CrossSectionField, f: StateFunction, g: StateFunction):
    def rate(r, v, region):
        material = field.materials[region]
        total = 0.0
        if material.sigma_s > 0:
            total += material.sigma_s * _kernel_action(field.scatter_kernel, v, r, f, field.n_angle)
        if material.sigma_f > 0 and material.fission_mass > 0:
            total += material.sigma_f * material.fission_mass * _kernel_action(
                field.fission_kernel, v, r, g, field.n_angle)
        return total

    return rate


def track_cost_nbp(forest, f: StateFunction, g: StateFunction, t: float,
                   field: CrossSectionField | None = None) -> CostCounters:
    '''
    C_t[f, g] of a forest together with the raw scatter and birth counts.
    The compensator is filled in when the field is given.
    '''
    counters = CostCounters()
    for traj in forest.trajectories:
        if traj.birth_time > t:
            continue
        path = traj.path
        birth_cost = g(path.positions[0], path.velocities[0])
        counters.particles_created += 1
        counters.weighted_cost += birth_cost
        if traj.parent is None:
            counters.initial_cost += birth_cost
        for k in range(1, len(path.times)):
            if path.times[k] > t:
                break
            counters.scatter_events += 1
            counters.weighted_cost += f(path.positions[k], path.velocities[k])
    if field is not None:
        counters.compensator = compensator_nbp(forest, field, f, g, t)
    return counters


def compensator_nbp(forest, field: CrossSectionField, f: StateFunction, g: StateFunction, t: float) -> float:
    rate = _nbp_cost_rate(field, f, g)
    total = 0.0
    for traj in forest.trajectories:
        if traj.birth_time >= t:
            continue
        total += integrate_along(traj.path, field, rate, min(t, traj.path.t_end))
    return total


def track_cost_nrw(path: NrwPath, f: StateFunction, t: float) -> float:
    '''
    C_t[f] = sum of f over the scatters of one walk up to t.
    '''
    total = 0.0
    for k in range(1, len(path.times)):
        if path.times[k] > t:
            break
        total += f(path.positions[k], path.velocities[k])
    return total


def compensator_nrw(path: NrwPath, field: CrossSectionField, f: StateFunction, t: float) -> float:
    '''
    A_t = int alpha pi[f](R_s, V_s) ds along the walk.
    '''
    def rate(r, v, region):
        nodes, probs = field.region_pi_nodes(region, v)
        return field.materials[region].alpha * float(sum(p * f(r, u) for u, p in zip(nodes, probs)))

    return integrate_along(path, field, rate, min(t, path.t_end))


COST_CURVE_COLUMNS = ['t', 'cost_cpu', 'cost_mem', 'compensator', 'k', 'weighted_cost', 'cost_std_error',
                      'martingale_mean', 'martingale_std_error', 'log_cost_rate', 'cost_per_time']


def _mean_and_error(values: np.ndarray) -> tuple[float, float]:
    std_error = float(np.std(values, ddof=1)) / math.sqrt(len(values)) if len(values) > 1 else 0.0
    return float(np.mean(values)), std_error


def cost_curve(field: CrossSectionField, f: StateFunction, g: StateFunction, times, r, v, k: int, seed: int,
               process: Literal['nbp', 'nrw'] = 'nbp',
               population_cap: int = DEFAULT_POPULATION_CAP) -> pd.DataFrame:
    '''
    Cost statistics over k cycles at every sample time, one simulation per
    cycle grown to max(times). For walks g is ignored and there is no root cost.

    cost_cpu and cost_mem are the mean scatter and particle counts, compensator
    the mean A_t of C_t[f, g]. log_cost_rate is the cycle average of
    log(C_t) / t over cycles with C_t > 0.
    '''
    times = np.sort(np.atleast_1d(np.asarray(times, dtype=float)))
    if len(times) == 0 or times[0] <= 0:
        raise ConfigError('cost sample times must be positive', 'run.t')
    if k < 1:
        raise ConfigError(f'k must be at least 1, got {k}', 'run.k')
    horizon = float(times[-1])
    r, v = np.asarray(r, dtype=float).reshape(-1), np.asarray(v, dtype=float).reshape(-1)
    counters = np.empty((k, len(times)), dtype=object)
    for cycle in range(k):
        if process == 'nbp':
            forest = simulate_nbp(field, [(r, v)], horizon, cycle_seed_sequence(seed, cycle), population_cap)
            counters[cycle] = [track_cost_nbp(forest, f, g, s, field) for s in times]
        elif process == 'nrw':
            path = simulate_nrw(field, r, v, 0.0, horizon, cycle_generator(seed, cycle))
            counters[cycle] = [_walk_counters(path, field, f, s) for s in times]
        else:
            raise ConfigError(f'unknown process {process!r}', 'run.mode')

    rows = []
    for j, s in enumerate(times):
        column = counters[:, j]
        costs = np.array([c.weighted_cost for c in column])
        martingales = np.array([c.martingale for c in column])
        mean_cost, cost_error = _mean_and_error(costs)
        martingale_mean, martingale_error = _mean_and_error(martingales)
        positive = costs[costs > 0]
        rows.append({
            't': float(s),
            'cost_cpu': float(np.mean([c.scatter_events for c in column])),
            'cost_mem': float(np.mean([c.particles_created for c in column])),
            'compensator': float(np.mean([c.compensator for c in column])),
            'k': k, 'weighted_cost': mean_cost, 'cost_std_error': cost_error,
            'martingale_mean': martingale_mean, 'martingale_std_error': martingale_error,
            'log_cost_rate': float(np.mean(np.log(positive)) / s) if len(positive) else None,
            'cost_per_time': mean_cost / s,
        })
    return pd.DataFrame(rows, columns=COST_CURVE_COLUMNS)


def _walk_counters(path: NrwPath, field: CrossSectionField, f: StateFunction, t: float) -> CostCounters:
    scatters = int(np.sum(path.times[1:] <= t))
    return CostCounters(scatter_events=scatters, particles_created=1,
                        weighted_cost=track_cost_nrw(path, f, t),
                        compensator=compensator_nrw(path, field, f, t))


@dataclass(frozen=True)
class ComplexityConstants:
    '''
    Attributes:
    kappa0 (float): Bias constant.
    kappa (float): Variance constant of the regime (kappa_1, kappa_2, kappa_3 or the walk constants).
    lambda_star (float): Principal eigenvalue.
    lambda_second (float | None): Second-moment growth rate (walk regimes only).
    cost_rate (float): Cost per unit of k t (critical) or per sample (other regimes).
    '''
    kappa0: float
    kappa: float
    lambda_star: float
    lambda_second: float | None = None
    cost_rate: float = 1.0


@dataclass(frozen=True)
class BudgetPlan:
    regime: str
    k: int
    t: float
    predicted_cost: float
    error_bound: float
    t_asymptotic: float

    def as_dict(self) -> dict:
        return asdict(self)


def error_bound(regime: BudgetRegime, constants: ComplexityConstants, k: float, t: float) -> float:
    '''
    Mean-squared error bound of the eigenvalue estimator for k samples at horizon t.
    '''
    bias = constants.kappa0 / t ** 2
    lam = constants.lambda_star
    if regime == 'critical':
        return t * constants.kappa / k + bias
    if regime == 'supercritical':
        return constants.kappa / k + bias
    if regime == 'subcritical':
        return constants.kappa * math.exp(-lam * t) / k + bias
    return constants.kappa * math.exp((constants.lambda_second - 2.0 * lam) * t) / k + bias


def _optimal_horizon(rate: float, kappa0: float, epsilon: float) -> float:
    '''
    Root of rate eps^2 t^3 - rate kappa0 t - 2 kappa0 = 0 above sqrt(kappa0)/eps.
    '''
    lower = math.sqrt(kappa0) / epsilon

    def stationarity(t):
        return rate * epsilon ** 2 * t ** 3 - rate * kappa0 * t - 2.0 * kappa0

    upper = 2.0 * lower
    while stationarity(upper) <= 0:
        upper *= 2.0
    return brentq(stationarity, lower, upper, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


def check_regime(regime: str, constants: ComplexityConstants, epsilon: float):
    lam = constants.lambda_star
    problems = {
        'critical': abs(lam) > CRITICAL_TOLERANCE,
        'supercritical': not lam > 0,
        'subcritical': not lam < 0,
        'nrw': constants.lambda_second is None or constants.lambda_second < 2.0 * lam,
        'h_nrw': constants.lambda_second is None or constants.lambda_second < 2.0 * lam,
    }
    if regime not in problems:
        raise ConfigError(f'unknown regime {regime!r}', 'plan.regime')
    if not epsilon > 0:
        raise ConfigError(f'epsilon must be positive, got {epsilon}', 'plan.epsilon')
    if not (constants.kappa0 > 0 and constants.kappa > 0):
        raise ConfigError('kappa constants must be positive', 'plan')
    if problems[regime]:
        logger.error(f"Regime {regime} is inconsistent with lambda*={lam}, lambda'={constants.lambda_second}.")
        raise ConfigError(f'regime {regime} is inconsistent with the given eigenvalues', 'plan.regime')


def plan_budget(regime: BudgetRegime, constants: ComplexityConstants, epsilon: float) -> BudgetPlan:
    '''
    Cheapest (k, t) whose error bound does not exceed epsilon^2.

    Critical: t = sqrt(2 kappa0) / eps and k = kappa1 t^3 / kappa0, which makes
    both error terms equal to kappa0 / t^2; the cost k t scales as eps^-4.
    Other regimes minimise the cost under the constraint with a Lagrange
    condition that is a cubic in t.
    '''
    check_regime(regime, constants, epsilon)
    kappa0, kappa, lam = constants.kappa0, constants.kappa, constants.lambda_star
    t_asymptotic = math.sqrt(kappa0) / epsilon

    if regime == 'critical':
        t = math.sqrt(2.0 * kappa0) / epsilon
        k_real = kappa / kappa0 * t ** 3
        cost = constants.cost_rate * k_real * t
    else:
        if regime == 'supercritical':
            rate = lam
        elif regime == 'subcritical':
            rate = -lam
        else:
            rate = constants.lambda_second - 2.0 * lam
        if rate > 0:
            t = _optimal_horizon(rate, kappa0, epsilon)
        else:
            t = math.sqrt(2.0 * kappa0) / epsilon
        slack = epsilon ** 2 - kappa0 / t ** 2
        growth = 1.0 if regime == 'supercritical' else math.exp(rate * t)
        k_real = kappa * growth / slack
        per_sample = math.exp(lam * t) / lam if regime == 'supercritical' else 1.0
        cost = constants.cost_rate * k_real * per_sample

    k = max(int(math.ceil(k_real)), 1)
    bound = error_bound(regime, constants, k, t)
    logger.info(f"Budget plan ({regime}, eps={epsilon}): k={k}, t={t:.6g}, bound={bound:.3e}.")
    return BudgetPlan(regime, k, t, cost, bound, t_asymptotic)
