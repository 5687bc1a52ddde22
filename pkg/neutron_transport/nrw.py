'''
Neutron random walk: linear flights, scatters at an inhomogeneous rate sampled
by thinning, killing at the boundary and truncation at a horizon.
'''
import logging
import math

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
import pandas as pd

from numpy.polynomial.legendre import leggauss

from neutron_transport.exceptions import ConfigError, OutOfLifeError, RateBoundError
from neutron_transport.geometry import check_interior
from neutron_transport.xsection import CrossSectionField

logger = logging.getLogger(__name__)

EVENT_COLUMNS = ['cycle', 't', 'rx', 'ry', 'vx', 'vy', 'event']
BOUND_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class NrwPath:
    '''
    One walk: scatter events (t_k, r_k, v_k), k = 0..n, with event 0 the start.

    Attributes:
    times (np.ndarray): Event times, shape (n+1,).
    positions (np.ndarray): Event positions, shape (n+1, dim).
    velocities (np.ndarray): Velocities after each event, shape (n+1, dim).
    t_end (float): Terminal time: boundary hit, horizon or fission.
    exited (bool): True iff killed at the boundary before the horizon.
    '''
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    t_end: float
    exited: bool

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def n_scatters(self) -> int:
        return len(self.times) - 1

    @property
    def end_position(self) -> np.ndarray:
        return self.positions[-1] + self.velocities[-1] * (self.t_end - self.times[-1])

    @property
    def end_velocity(self) -> np.ndarray:
        return self.velocities[-1]

    def state_at(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        '''
        Position and active velocity at time s in [t_start, t_end], no life check.
        '''
        k = max(int(np.searchsorted(self.times, s, side='right')) - 1, 0)
        return self.positions[k] + self.velocities[k] * (s - self.times[k]), self.velocities[k]

    def pieces(self, t: float | None = None) -> Iterator[tuple[float, float, np.ndarray, np.ndarray]]:
        '''
        Linear pieces (t_a, t_b, r_a, v) of the path up to time t.
        '''
        t = self.t_end if t is None else t
        for k in range(len(self.times)):
            t_a = float(self.times[k])
            if t_a >= t:
                break
            t_b = float(self.times[k + 1]) if k + 1 < len(self.times) else self.t_end
            yield t_a, min(t_b, t), self.positions[k], self.velocities[k]

    def truncate(self, t: float) -> 'NrwPath':
        '''
        The path stopped (not exited) at time t <= t_end.
        '''
        keep = int(np.searchsorted(self.times, t, side='left'))
        keep = max(keep, 1)
        return NrwPath(self.times[:keep], self.positions[:keep], self.velocities[:keep], float(t), False)

    def events_frame(self, cycle: int = 0) -> pd.DataFrame:
        rows = []
        for k, (t_k, r_k, v_k) in enumerate(zip(self.times, self.positions, self.velocities)):
            rows.append(_event_row(cycle, t_k, r_k, v_k, 'start' if k == 0 else 'scatter'))
        rows.append(_event_row(cycle, self.t_end, self.end_position, self.end_velocity,
                               'exit' if self.exited else 'horizon'))
        return pd.DataFrame(rows, columns=EVENT_COLUMNS)


def _event_row(cycle, t, r, v, event) -> list:
    r, v = np.asarray(r).tolist(), np.asarray(v).tolist()
    return [cycle, float(t), r[0], r[1] if len(r) > 1 else 0.0, v[0], v[1] if len(v) > 1 else 0.0, event]


class RateModel(ABC):
    '''
    Jump rate and jump law of a walk, together with thinning bounds.
    '''
    field: CrossSectionField

    def __init__(self, field: CrossSectionField):
        self.field = field

    @abstractmethod
    def rate(self, region: int, r: np.ndarray, v: np.ndarray) -> float: ...

    @abstractmethod
    def bound(self, region: int, r: np.ndarray, v: np.ndarray, s_a: float, s_b: float) -> tuple[float, float]:
        '''
        Returns (s_hi, bound) with s_a < s_hi <= s_b and rate(r + v s) <= bound on [s_a, s_hi].
        '''

    @abstractmethod
    def sample_velocity(self, region: int, r: np.ndarray, v: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...


class PlainRates(RateModel):
    '''
    (alpha, pi): the walk of the many-to-one representation.
    '''

    def rate(self, region, r, v):
        return self.field.materials[region].alpha

    def bound(self, region, r, v, s_a, s_b):
        return s_b, self.field.materials[region].alpha

    def sample_velocity(self, region, r, v, rng):
        return self.field.sample_pi_velocity(region, v, rng)


class ScatterRates(RateModel):
    '''
    (sigma_s, pi_s): the motion of a single neutron in the branching process.
    '''

    def rate(self, region, r, v):
        return self.field.materials[region].sigma_s

    def bound(self, region, r, v, s_a, s_b):
        return s_b, self.field.materials[region].sigma_s

    def sample_velocity(self, region, r, v, rng):
        return self.field.sample_scatter_velocity(region, v, rng)


class FissionRates(RateModel):
    '''
    sigma_f: fission clock along an already simulated path.
    '''

    def rate(self, region, r, v):
        return self.field.materials[region].sigma_f

    def bound(self, region, r, v, s_a, s_b):
        return s_b, self.field.materials[region].sigma_f

    def sample_velocity(self, region, r, v, rng):
        return v


def next_event(rates: RateModel, r: np.ndarray, v: np.ndarray,
               rng: np.random.Generator, limit: float) -> tuple[float, int] | None:
    '''
    First jump of the flight r + v s before `limit`, by thinning on each
    region piece of the ray. Returns (s, region) or None.
    '''
    for s_a, s_b, region in rates.field.domain.ray_segments(r, v, limit):
        s = s_a
        while s < s_b:
            s_hi, bound = rates.bound(region, r, v, s, s_b)
            if bound <= 0:
                s = s_hi
                continue
            proposal = s + rng.exponential(1.0 / bound)
            if proposal >= s_hi:
                s = s_hi
                continue
            s = proposal
            rate = rates.rate(region, r + v * s, v)
            if rate > bound * (1.0 + BOUND_TOLERANCE):
                logger.error(f"Rate {rate} exceeds the thinning bound {bound} of {type(rates).__name__} "
                             f"at s={s} in region {region}.")
                raise RateBoundError(f'rate {rate} exceeds thinning bound {bound} in region {region}')
            if rate >= bound or rng.random() * bound < rate:
                return s, region
    return None


def sample_scatter_time(rates: RateModel, r, v, rng: np.random.Generator, limit: float = math.inf) -> float:
    '''
    Exact sample of the inhomogeneous exponential time to the next jump along
    r + v s. Returns inf when no jump occurs before min(limit, exit time).
    '''
    r, v = np.asarray(r, dtype=float), np.asarray(v, dtype=float)
    kappa = float(rates.field.domain.ray_distance(r, v.reshape(1, -1))[0])
    event = next_event(rates, r, v, rng, min(limit, kappa))
    return math.inf if event is None else event[0]


def simulate_nrw(field: CrossSectionField, r0, v0, t_start: float, horizon: float,
                 rng: np.random.Generator, rates: RateModel | None = None) -> NrwPath:
    '''
    Simulates a walk under `rates` (default (alpha, pi)) from (r0, v0) at t_start.

    The walk flies linearly, jumps at the model's rate and is killed on reaching
    the boundary. A jump falling exactly on the horizon is not performed.
    '''
    r = np.array(r0, dtype=float).reshape(-1)
    v = np.array(v0, dtype=float).reshape(-1)
    check_interior(field.domain, r, 'walk start')
    if not t_start < horizon:
        logger.error(f"Walk horizon {horizon} does not exceed start {t_start}.")
        raise ConfigError(f'horizon {horizon} must exceed t_start {t_start}', 'run.t')
    field.check_finite()
    rates = PlainRates(field) if rates is None else rates

    times, positions, velocities = [t_start], [r], [v]
    t = t_start
    while True:
        kappa = float(field.domain.ray_distance(r, v.reshape(1, -1))[0])
        remaining = horizon - t
        event = next_event(rates, r, v, rng, min(kappa, remaining))
        if event is None:
            exited = kappa <= remaining
            t_end = t + kappa if exited else horizon
            break
        s, region = event
        t += s
        r = r + v * s
        v = np.asarray(rates.sample_velocity(region, r, v, rng), dtype=float)
        times.append(t)
        positions.append(r)
        velocities.append(v)

    return NrwPath(np.array(times), np.array(positions), np.array(velocities), float(t_end), bool(exited))


def trajectory_at(path: NrwPath, s: float) -> tuple[np.ndarray, np.ndarray]:
    '''
    (r_s, v_s) by linear interpolation on the active piece.
    '''
    if s < path.t_start or s >= path.t_end:
        logger.error(f"Time {s} is outside the life [{path.t_start}, {path.t_end}) of the walk.")
        raise OutOfLifeError(f'time {s} outside [{path.t_start}, {path.t_end})')
    return path.state_at(s)


def check_life(path: NrwPath, t: float):
    if t > path.t_end:
        logger.error(f"Integral requested up to {t} past the end {path.t_end} of the walk.")
        raise OutOfLifeError(f'time {t} exceeds t_end {path.t_end}')


def region_pieces(path: NrwPath, field: CrossSectionField, t: float) -> Iterator[tuple[float, float, np.ndarray, np.ndarray, int]]:
    '''
    Pieces (t_a, t_b, r_a, v, region) of the path on which the region is constant.
    r_a is the position at t_a.
    '''
    for t_a, t_b, r_k, v_k in path.pieces(t):
        for s_a, s_b, region in field.domain.ray_segments(r_k, v_k, t_b - t_a):
            yield t_a + s_a, t_a + s_b, r_k + v_k * s_a, v_k, region


def beta_integral(path: NrwPath, field: CrossSectionField, t: float, scale: float = 1.0) -> float:
    '''
    Exact time integral of the piecewise-constant beta along the path up to t.
    '''
    check_life(path, t)
    return scale * sum(field.materials[region].beta * (t_b - t_a)
                       for t_a, t_b, _, _, region in region_pieces(path, field, t))


def integrate_along(path: NrwPath, field: CrossSectionField, fn: Callable[[np.ndarray, np.ndarray, int], float],
                    t: float, order: int = 16) -> float:
    '''
    Time integral of fn(r, v, region) along the path up to t, Gauss-Legendre per region piece.
    '''
    check_life(path, t)
    nodes, weights = leggauss(order)
    total = 0.0
    for t_a, t_b, r_a, v, region in region_pieces(path, field, t):
        half = 0.5 * (t_b - t_a)
        for node, weight in zip(nodes, weights):
            s = half * (node + 1.0)
            total += half * weight * fn(r_a + v * s, v, region)
    return total
