'''
Convex spatial domains, velocity spaces, ray/boundary exit times and region lookup.

Positions and velocities are numpy arrays of shape (dim,). Domains are open:
a point on the boundary is exterior, so a particle reaching it is dead.
Inclusions only re-label material regions, they never change exit times.
'''
import logging
import math

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from neutron_transport.exceptions import ConfigError, DomainError

logger = logging.getLogger(__name__)

BACKGROUND = 0


def check_interior(domain: 'Domain', r: np.ndarray, error_msg: str = ''):
    '''
    Raises DomainError unless r lies strictly inside the domain.
    '''
    if not domain.contains(r):
        logger.error(f"Position {np.asarray(r).tolist()} is not interior: {error_msg}.")
        raise DomainError(f'Position {np.asarray(r).tolist()} is not interior to {domain}: {error_msg}')


def check_closure(domain: 'Domain', r: np.ndarray, error_msg: str = ''):
    if not domain.in_closure(r):
        logger.error(f"Position {np.asarray(r).tolist()} is outside the closure: {error_msg}.")
        raise DomainError(f'Position {np.asarray(r).tolist()} is outside the closure of {domain}: {error_msg}')


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float


class Domain(ABC):
    '''
    Open, bounded, convex spatial domain with piecewise material regions.
    '''
    dim: int

    @property
    @abstractmethod
    def n_regions(self) -> int: ...

    @abstractmethod
    def contains(self, r) -> bool: ...

    @abstractmethod
    def in_closure(self, r, tol: float = 1e-12) -> bool: ...

    @abstractmethod
    def region_index(self, r: np.ndarray) -> int: ...

    @abstractmethod
    def ray_distance(self, r: np.ndarray, velocities: np.ndarray) -> np.ndarray:
        '''
        Exit times of r + v s for every row v of velocities (no interior check).
        '''

    @abstractmethod
    def region_crossings(self, r: np.ndarray, v: np.ndarray, s_end: float) -> list[float]:
        '''
        Times in (0, s_end) at which the ray r + v s crosses a region interface.
        '''

    @abstractmethod
    def distance_breaks(self, r: np.ndarray, v: np.ndarray, velocities: np.ndarray, s_end: float) -> list[float]:
        '''
        Times in (0, s_end) at which ray_distance(r + v s, velocities) switches
        exit wall for some row; in between it is affine in s.
        '''

    @abstractmethod
    def max_corner_distance(self, r: np.ndarray) -> float:
        '''
        Largest distance from r to the domain's extreme points; bounds every
        directional distance and is convex in r.
        '''

    @abstractmethod
    def position_grid(self, n: int) -> np.ndarray:
        '''
        Interior positions on a regular grid of n points per axis, shape (m, dim).
        '''

    def region_of(self, r) -> int:
        r = np.asarray(r, dtype=float)
        check_interior(self, r, 'region lookup')
        return self.region_index(r)

    def exit_time(self, r, v) -> float:
        r = np.asarray(r, dtype=float)
        v = np.asarray(v, dtype=float)
        check_closure(self, r, 'exit time requested')
        if not np.any(v):
            raise DomainError('Exit time is undefined for a zero velocity')
        return float(self.ray_distance(r, v.reshape(1, -1))[0])

    def ray_segments(self, r: np.ndarray, v: np.ndarray, s_end: float) -> list[tuple[float, float, int]]:
        '''
        Splits the flight r + v s, s in [0, s_end], into pieces of constant
        region. Each piece is labelled by its midpoint.
        '''
        cuts = [0.0] + self.region_crossings(r, v, s_end) + [s_end]
        segments = []
        for s_a, s_b in zip(cuts[:-1], cuts[1:]):
            if s_b <= s_a:
                continue
            midpoint = r + v * (0.5 * (s_a + s_b))
            segments.append((s_a, s_b, self.region_index(midpoint)))
        return segments


@dataclass(frozen=True)
class Interval1D(Domain):
    '''
    Slab (-L, L), optionally cut into segments at the given split points.

    Attributes:
    halfwidth (float): L > 0.
    splits (tuple[float, ...]): Increasing interior interface positions.
    '''
    halfwidth: float
    splits: tuple[float, ...] = ()
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        if not self.halfwidth > 0 or not math.isfinite(self.halfwidth):
            raise ConfigError(f'halfwidth must be positive and finite, got {self.halfwidth}', 'geometry.halfwidth')
        splits = tuple(float(s) for s in self.splits)
        if any(b <= a for a, b in zip(splits[:-1], splits[1:])):
            raise ConfigError('splits must be strictly increasing', 'geometry.splits')
        if any(abs(s) >= self.halfwidth for s in splits):
            raise ConfigError('splits must lie inside (-L, L)', 'geometry.splits')
        object.__setattr__(self, 'splits', splits)

    @property
    def n_regions(self) -> int:
        return len(self.splits) + 1

    def contains(self, r) -> bool:
        x = float(np.asarray(r, dtype=float).reshape(-1)[0])
        return -self.halfwidth < x < self.halfwidth

    def in_closure(self, r, tol: float = 1e-12) -> bool:
        x = float(np.asarray(r, dtype=float).reshape(-1)[0])
        return abs(x) <= self.halfwidth * (1.0 + tol)

    def region_index(self, r: np.ndarray) -> int:
        return int(np.searchsorted(self.splits, r[0], side='right'))

    def ray_distance(self, r: np.ndarray, velocities: np.ndarray) -> np.ndarray:
        vx = np.asarray(velocities, dtype=float)[:, 0]
        wall = np.where(vx > 0, self.halfwidth, -self.halfwidth)
        with np.errstate(divide='ignore', invalid='ignore'):
            times = np.where(vx != 0, (wall - r[0]) / vx, np.inf)
        return np.maximum(times, 0.0)

    def region_crossings(self, r: np.ndarray, v: np.ndarray, s_end: float) -> list[float]:
        if v[0] == 0 or not self.splits:
            return []
        times = sorted((s - r[0]) / v[0] for s in self.splits)
        return [s for s in times if 0.0 < s < s_end]

    def distance_breaks(self, r, v, velocities, s_end):
        return []

    def max_corner_distance(self, r: np.ndarray) -> float:
        return self.halfwidth + abs(float(r[0]))

    def position_grid(self, n: int) -> np.ndarray:
        edges = np.linspace(-self.halfwidth, self.halfwidth, n + 2)[1:-1]
        return edges.reshape(-1, 1)


@dataclass(frozen=True)
class Rect2D(Domain):
    '''
    Axis-aligned rectangle (-Lx, Lx) x (-Ly, Ly) centred at the origin.
    Circle inclusions (rods) are material regions 1..n, the rest is region 0.

    Attributes:
    half_x (float): Lx > 0.
    half_y (float): Ly > 0.
    inclusions (tuple[Circle, ...]): Rods, each strictly inside the rectangle.
    '''
    half_x: float
    half_y: float
    inclusions: tuple[Circle, ...] = ()
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        for name, value in (('half_x', self.half_x), ('half_y', self.half_y)):
            if not value > 0 or not math.isfinite(value):
                raise ConfigError(f'{name} must be positive and finite, got {value}', f'geometry.{name}')
        for i, circle in enumerate(self.inclusions):
            cx, cy = circle.center
            if not circle.radius > 0:
                raise ConfigError('radius must be positive', f'geometry.inclusions[{i}].radius')
            if abs(cx) + circle.radius >= self.half_x or abs(cy) + circle.radius >= self.half_y:
                raise ConfigError('inclusion must lie strictly inside the rectangle', f'geometry.inclusions[{i}]')
        object.__setattr__(self, 'inclusions', tuple(self.inclusions))

    @property
    def n_regions(self) -> int:
        return len(self.inclusions) + 1

    def contains(self, r) -> bool:
        x, y = np.asarray(r, dtype=float)[:2]
        return abs(x) < self.half_x and abs(y) < self.half_y

    def in_closure(self, r, tol: float = 1e-12) -> bool:
        x, y = np.asarray(r, dtype=float)[:2]
        return abs(x) <= self.half_x * (1.0 + tol) and abs(y) <= self.half_y * (1.0 + tol)

    def region_index(self, r: np.ndarray) -> int:
        for i, circle in enumerate(self.inclusions):
            if math.hypot(r[0] - circle.center[0], r[1] - circle.center[1]) < circle.radius:
                return i + 1
        return BACKGROUND

    def ray_distance(self, r: np.ndarray, velocities: np.ndarray) -> np.ndarray:
        velocities = np.asarray(velocities, dtype=float)
        walls = np.where(velocities > 0, [self.half_x, self.half_y], [-self.half_x, -self.half_y])
        with np.errstate(divide='ignore', invalid='ignore'):
            times = np.where(velocities != 0, (walls - r[:2]) / velocities, np.inf)
        return np.maximum(times.min(axis=1), 0.0)

    def region_crossings(self, r: np.ndarray, v: np.ndarray, s_end: float) -> list[float]:
        a = float(v @ v)
        crossings = []
        for circle in self.inclusions:
            offset = r - np.asarray(circle.center)
            b = 2.0 * float(v @ offset)
            c = float(offset @ offset) - circle.radius ** 2
            disc = b * b - 4.0 * a * c
            if disc <= 0:
                continue
            root = math.sqrt(disc)
            for s in ((-b - root) / (2.0 * a), (-b + root) / (2.0 * a)):
                if 0.0 < s < s_end:
                    crossings.append(s)
        return sorted(crossings)

    def distance_breaks(self, r, v, velocities, s_end):
        velocities = np.asarray(velocities, dtype=float)
        oblique = (velocities[:, 0] != 0) & (velocities[:, 1] != 0)
        if not np.any(oblique):
            return []
        ux, uy = velocities[oblique, 0], velocities[oblique, 1]
        wall_x = np.where(ux > 0, self.half_x, -self.half_x)
        wall_y = np.where(uy > 0, self.half_y, -self.half_y)
        # x and y exit times are affine in s and meet where gap = s * slope
        gap = (wall_x - r[0]) / ux - (wall_y - r[1]) / uy
        slope = v[0] / ux - v[1] / uy
        with np.errstate(divide='ignore', invalid='ignore'):
            times = np.where(slope != 0, gap / slope, np.inf)
        return [float(s) for s in np.unique(times[(times > 0) & (times < s_end)])]

    def max_corner_distance(self, r: np.ndarray) -> float:
        return math.hypot(self.half_x + abs(float(r[0])), self.half_y + abs(float(r[1])))

    def position_grid(self, n: int) -> np.ndarray:
        xs = np.linspace(-self.half_x, self.half_x, n + 2)[1:-1]
        ys = np.linspace(-self.half_y, self.half_y, n + 2)[1:-1]
        grid_x, grid_y = np.meshgrid(xs, ys, indexing='ij')
        return np.column_stack([grid_x.ravel(), grid_y.ravel()])


class VelocitySpace(ABC):
    dim: int

    @property
    @abstractmethod
    def speed_max(self) -> float: ...

    @abstractmethod
    def contains(self, v) -> bool: ...

    @abstractmethod
    def sector_of(self, v: np.ndarray, n_sectors: int) -> int:
        '''
        Velocity sector used by phase-space histograms.
        '''

    def check(self, v, key: str = 'velocity'):
        if not self.contains(v):
            logger.error(f"Velocity {np.asarray(v).tolist()} does not belong to {self}.")
            raise ConfigError(f'velocity {np.asarray(v).tolist()} is not in {self}', key)


@dataclass(frozen=True)
class TwoPoint1D(VelocitySpace):
    '''
    V = {-v0, +v0}.
    '''
    v0: float
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        if not self.v0 > 0 or not math.isfinite(self.v0):
            raise ConfigError(f'v0 must be positive and finite, got {self.v0}', 'velocity.v0')

    @property
    def speed_max(self) -> float:
        return self.v0

    @property
    def members(self) -> np.ndarray:
        return np.array([[-self.v0], [self.v0]])

    def contains(self, v) -> bool:
        v = np.asarray(v, dtype=float).reshape(-1)
        return v.shape == (1,) and abs(abs(v[0]) - self.v0) <= 1e-12 * self.v0

    def sector_of(self, v: np.ndarray, n_sectors: int = 2) -> int:
        return int(v[0] > 0)


@dataclass(frozen=True)
class FixedSpeed2D(VelocitySpace):
    '''
    Planar velocities of constant speed v0.
    '''
    v0: float
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        if not self.v0 > 0 or not math.isfinite(self.v0):
            raise ConfigError(f'v0 must be positive and finite, got {self.v0}', 'velocity.v0')

    @property
    def speed_max(self) -> float:
        return self.v0

    def contains(self, v) -> bool:
        v = np.asarray(v, dtype=float).reshape(-1)
        return v.shape == (2,) and abs(math.hypot(*v) - self.v0) <= 1e-9 * self.v0

    def sector_of(self, v: np.ndarray, n_sectors: int) -> int:
        return angle_sector(v, n_sectors)


@dataclass(frozen=True)
class Annulus2D(VelocitySpace):
    '''
    Planar velocities with vmin <= |v| <= vmax. Scattering keeps the incoming speed.
    '''
    vmin: float
    vmax: float
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        if not 0 < self.vmin < self.vmax < math.inf:
            raise ConfigError(f'need 0 < vmin < vmax < inf, got ({self.vmin}, {self.vmax})', 'velocity')

    @property
    def speed_max(self) -> float:
        return self.vmax

    def contains(self, v) -> bool:
        v = np.asarray(v, dtype=float).reshape(-1)
        speed = math.hypot(*v) if v.shape == (2,) else -1.0
        return self.vmin * (1 - 1e-12) <= speed <= self.vmax * (1 + 1e-12)

    def sector_of(self, v: np.ndarray, n_sectors: int) -> int:
        return angle_sector(v, n_sectors)


def angle_sector(v: np.ndarray, n_sectors: int) -> int:
    angle = math.atan2(v[1], v[0]) % (2.0 * math.pi)
    return min(int(angle / (2.0 * math.pi) * n_sectors), n_sectors - 1)


def angle_nodes(speed: float, n_angle: int) -> np.ndarray:
    '''
    Trapezoid nodes on the velocity circle of the given speed, shape (n_angle, 2).
    '''
    angles = 2.0 * math.pi * np.arange(n_angle) / n_angle
    return speed * np.column_stack([np.cos(angles), np.sin(angles)])
