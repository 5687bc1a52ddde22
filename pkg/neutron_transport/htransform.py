'''
Doob h-transforms of the neutron random walk.

An h-function re-weights the jump law, pi^h(v, v') ~ h(r, v') pi(v, v'), and
speeds the jump rate up to alpha^h = alpha int h pi / h. Unlifted functions
vanish on the outgoing boundary, which drives alpha^h to infinity there, so
the transformed walk never leaves the domain. The Feynman-Kac weight of the
transformed walk is h(r, v) exp(int (Lh/h + beta)) g / h at the horizon,
with L = T + J the transport plus jump generator.
'''
import logging
import math

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from scipy.integrate import quad

from neutron_transport.exceptions import ConfigError, SingularRateError
from neutron_transport.geometry import Domain, angle_nodes, check_interior
from neutron_transport.nrw import NrwPath, RateModel, region_pieces, simulate_nrw
from neutron_transport.slab1d import SlabEigen
from neutron_transport.xsection import CrossSectionField

logger = logging.getLogger(__name__)

QUAD_TOLERANCE = 1e-12


def _speeds(velocities: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(velocities * velocities, axis=1))


def forward_distance(domain: Domain, r: np.ndarray, velocities: np.ndarray) -> np.ndarray:
    '''
    Distance from r to the boundary along each velocity.
    '''
    return _speeds(velocities) * domain.ray_distance(r, velocities)


def backward_distance(domain: Domain, r: np.ndarray, velocities: np.ndarray) -> np.ndarray:
    return _speeds(velocities) * domain.ray_distance(r, -velocities)


class HFunction(ABC):
    '''
    Importance function h on D x V.

    Subclasses must be quasi-concave along their own rays (h(r + v s, v) on an
    interval is at least its smaller endpoint value), and direction_sup must be
    maximal at the endpoints of any segment; the thinning bounds rely on both.
    '''
    vanishes_on_boundary: bool = True
    conservative: bool = True

    @abstractmethod
    def values(self, r: np.ndarray, velocities: np.ndarray) -> np.ndarray:
        '''
        h(r, v) for every row v of velocities.
        '''

    @abstractmethod
    def transport(self, r: np.ndarray, v: np.ndarray) -> float:
        '''
        Th(r, v) = d/ds h(r + v s, v) at s = 0+, the right limit on kinks.
        '''

    @abstractmethod
    def direction_sup(self, r: np.ndarray) -> float:
        '''
        Upper bound of h(r, v') over all velocities v'.
        '''

    def value(self, r, v) -> float:
        r = np.asarray(r, dtype=float).reshape(-1)
        v = np.asarray(v, dtype=float).reshape(1, -1)
        return float(self.values(r, v)[0])

    def ray_kinks(self, r: np.ndarray, v: np.ndarray, s_end: float) -> list[float]:
        return []

    def jump_breaks(self, r: np.ndarray, v: np.ndarray, nodes: np.ndarray, s_end: float) -> list[float] | None:
        '''
        Cuts of (0, s_end) between which h(r + v s, v) and h(r + v s, u) for
        every u in nodes are affine in s; None when h is not piecewise affine
        along rays.
        '''
        return None


class ConstantH(HFunction):
    '''
    h = value; the transform is the identity.
    '''
    vanishes_on_boundary = False
    conservative = False

    def __init__(self, value: float = 1.0):
        if not value > 0:
            raise ConfigError(f'constant h must be positive, got {value}', 'h.value')
        self.constant = float(value)

    def values(self, r, velocities):
        return np.full(len(velocities), self.constant)

    def transport(self, r, v):
        return 0.0

    def direction_sup(self, r):
        return self.constant

    def jump_breaks(self, r, v, nodes, s_end):
        return []


class DirectionalDistance(HFunction):
    '''
    h = c |v| kappa_{r,v}, c times the distance to the boundary along v.
    '''

    def __init__(self, domain: Domain, c: float = 1.0):
        if not c > 0:
            raise ConfigError(f'c must be positive, got {c}', 'h.c')
        self.domain = domain
        self.c = c

    def values(self, r, velocities):
        return self.c * forward_distance(self.domain, r, velocities)

    def transport(self, r, v):
        return -self.c * math.sqrt(float(v @ v))

    def direction_sup(self, r):
        return self.c * self.domain.max_corner_distance(r)

    def jump_breaks(self, r, v, nodes, s_end):
        return self.domain.distance_breaks(r, v, nodes, s_end)


class Urts(HFunction):
    '''
    h = min(c1 d_fwd(r, v), c2 (d_bwd(r, v) + r_shift)) with d_fwd, d_bwd the
    distances to the boundary ahead of and behind r along v.
    '''

    def __init__(self, domain: Domain, c1: float = 1.0, c2: float = 1.0, r_shift: float = 0.0):
        if not (c1 > 0 and c2 > 0 and r_shift >= 0):
            raise ConfigError(f'need c1, c2 > 0 and r_shift >= 0, got ({c1}, {c2}, {r_shift})', 'h')
        self.domain = domain
        self.c1, self.c2, self.r_shift = c1, c2, r_shift

    def _pieces(self, r, velocities):
        ahead = self.c1 * forward_distance(self.domain, r, velocities)
        behind = self.c2 * (backward_distance(self.domain, r, velocities) + self.r_shift)
        return ahead, behind

    def values(self, r, velocities):
        return np.minimum(*self._pieces(r, velocities))

    def transport(self, r, v):
        ahead, behind = self._pieces(r, v.reshape(1, -1))
        speed = math.sqrt(float(v @ v))
        return -self.c1 * speed if ahead[0] <= behind[0] else self.c2 * speed

    def direction_sup(self, r):
        return self.c1 * self.domain.max_corner_distance(r)

    def ray_kinks(self, r, v, s_end):
        ahead, behind = self._pieces(r, v.reshape(1, -1))
        if ahead[0] <= behind[0]:
            return []
        s = (ahead[0] - behind[0]) / ((self.c1 + self.c2) * math.sqrt(float(v @ v)))
        return [s] if 0.0 < s < s_end else []

    def jump_breaks(self, r, v, nodes, s_end):
        cuts = sorted(set(self.domain.distance_breaks(r, v, nodes, s_end))
                      | set(self.domain.distance_breaks(r, v, -nodes, s_end))
                      | set(self.ray_kinks(r, v, s_end)))
        # the min switches branch where the affine gap changes sign
        crossings = set()
        edges = [0.0] + cuts + [s_end]
        for s_a, s_b in zip(edges[:-1], edges[1:]):
            gap_a = np.subtract(*self._pieces(r + v * s_a, nodes))
            gap_b = np.subtract(*self._pieces(r + v * s_b, nodes))
            change = gap_a * gap_b < 0
            roots = s_a + (s_b - s_a) * gap_a[change] / (gap_a[change] - gap_b[change])
            crossings.update(float(s) for s in roots)
        return sorted(set(cuts) | crossings)


class UrtsProduct(HFunction):
    '''
    h = c d_fwd(r, v) (d_bwd(r, v) + r_shift).
    '''

    def __init__(self, domain: Domain, c: float = 1.0, r_shift: float = 0.0):
        if not (c > 0 and r_shift >= 0):
            raise ConfigError(f'need c > 0 and r_shift >= 0, got ({c}, {r_shift})', 'h')
        self.domain = domain
        self.c, self.r_shift = c, r_shift
        corner = domain.max_corner_distance(np.zeros(domain.dim))
        self._sup = c * 2.0 * corner * (2.0 * corner + r_shift)

    def values(self, r, velocities):
        return self.c * forward_distance(self.domain, r, velocities) * (
            backward_distance(self.domain, r, velocities) + self.r_shift)

    def transport(self, r, v):
        velocities = v.reshape(1, -1)
        ahead = forward_distance(self.domain, r, velocities)[0]
        behind = backward_distance(self.domain, r, velocities)[0] + self.r_shift
        return self.c * math.sqrt(float(v @ v)) * (ahead - behind)

    def direction_sup(self, r):
        return self._sup


class LiftedH(HFunction):
    '''
    base + epsilon; positive everywhere, so the walk may exit.
    '''
    vanishes_on_boundary = False
    conservative = False

    def __init__(self, base: HFunction, epsilon: float):
        if not epsilon > 0:
            raise ConfigError(f'epsilon must be positive, got {epsilon}', 'h.epsilon')
        self.base = base
        self.epsilon = epsilon

    def values(self, r, velocities):
        return self.base.values(r, velocities) + self.epsilon

    def transport(self, r, v):
        return self.base.transport(r, v)

    def direction_sup(self, r):
        return self.base.direction_sup(r) + self.epsilon

    def ray_kinks(self, r, v, s_end):
        return self.base.ray_kinks(r, v, s_end)

    def jump_breaks(self, r, v, nodes, s_end):
        return self.base.jump_breaks(r, v, nodes, s_end)


class PoweredH(HFunction):
    '''
    base ** gamma with gamma in [0, 1]: a milder transform closer to the plain walk.
    '''

    def __init__(self, base: HFunction, gamma: float):
        if not 0.0 <= gamma <= 1.0:
            raise ConfigError(f'blend gamma must lie in [0, 1], got {gamma}', 'h.blend')
        self.base = base
        self.gamma = gamma
        self.vanishes_on_boundary = base.vanishes_on_boundary and gamma > 0
        self.conservative = base.conservative and gamma == 1.0

    def values(self, r, velocities):
        return self.base.values(r, velocities) ** self.gamma

    def transport(self, r, v):
        if self.gamma == 0.0:
            return 0.0
        base_value = self.base.value(r, v)
        return self.gamma * base_value ** (self.gamma - 1.0) * self.base.transport(r, v)

    def direction_sup(self, r):
        return self.base.direction_sup(r) ** self.gamma

    def ray_kinks(self, r, v, s_end):
        return self.base.ray_kinks(r, v, s_end)


class EigenH(HFunction):
    '''
    The analytic slab eigenfunction phi.
    '''

    def __init__(self, eigen: SlabEigen):
        self.eigen = eigen

    def values(self, r, velocities):
        x = float(r[0])
        return np.array([self.eigen.phi(x, u[0]) for u in velocities])

    def transport(self, r, v):
        return self.eigen.transport_derivative(r[0], v[0])

    def direction_sup(self, r):
        return self.eigen.profile_max


def slab_h1(domain: Domain, v0: float, sigma_s: float) -> Urts:
    '''
    (r + L + v0/sigma_s) ^ (L - r) for +v0, mirrored for -v0.
    '''
    return Urts(domain, 1.0, 1.0, v0 / sigma_s)


def slab_h2(domain: Domain) -> DirectionalDistance:
    '''
    L - r for +v0, r + L for -v0.
    '''
    return DirectionalDistance(domain, 1.0)


def slab_h3(domain: Domain, v0: float, sigma_s: float) -> UrtsProduct:
    '''
    (r + L + v0/sigma_s) (L - r) for +v0, mirrored for -v0.
    '''
    return UrtsProduct(domain, 1.0, v0 / sigma_s)


def eval_h(h: HFunction, r, v) -> float:
    return h.value(r, v)


def check_positive(h: HFunction, r, v, value: float):
    if not value > 0:
        logger.error(f"h vanishes at interior state r={np.asarray(r).tolist()}, v={np.asarray(v).tolist()}.")
        raise SingularRateError(f'h({np.asarray(r).tolist()}, {np.asarray(v).tolist()}) = {value}')


def transport_term(h: HFunction, r, v) -> float:
    '''
    Th/h at (r, v).
    '''
    r = np.asarray(r, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    value = h.value(r, v)
    check_positive(h, r, v, value)
    return h.transport(r, v) / value


def _jump_sum(h: HFunction, field: CrossSectionField, region: int, r: np.ndarray, v: np.ndarray) -> float:
    '''
    Jh(r, v) = alpha sum_j w_j (h(r, v_j) - h(r, v)).
    '''
    alpha = field.materials[region].alpha
    if alpha == 0:
        return 0.0
    nodes, probs = field.region_pi_nodes(region, v)
    return alpha * float(probs @ (h.values(r, nodes) - h.value(r, v)))


def jump_term(h: HFunction, field: CrossSectionField, r, v) -> float:
    '''
    Jh/h at (r, v): exact two-point sum in 1D, trapezoid over N_angle directions in 2D.
    '''
    r = np.asarray(r, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    region = field.region_of(r)
    value = h.value(r, v)
    check_positive(h, r, v, value)
    return _jump_sum(h, field, region, r, v) / value


class HTransformedRates(RateModel):
    '''
    (alpha^h, pi^h) with the thinning bound alpha sup_v' h / min h recomputed on
    sub-intervals that shrink geometrically towards the zero set of h.
    '''

    def __init__(self, field: CrossSectionField, h: HFunction):
        super().__init__(field)
        self.h = h

    def rate(self, region, r, v):
        value = self.h.value(r, v)
        check_positive(self.h, r, v, value)
        return self.field.materials[region].alpha + _jump_sum(self.h, self.field, region, r, v) / value

    def bound(self, region, r, v, s_a, s_b):
        alpha = self.field.materials[region].alpha
        if alpha == 0:
            return s_b, 0.0
        h_a = self.h.value(r + v * s_a, v)
        check_positive(self.h, r + v * s_a, v, h_a)
        s_hi = s_b
        h_b = self.h.value(r + v * s_hi, v)
        while h_b < 0.5 * h_a and s_hi - s_a > 1e-15 * max(1.0, abs(s_a)):
            s_hi = s_a + 0.5 * (s_hi - s_a)
            h_b = self.h.value(r + v * s_hi, v)
        h_min = min(h_a, h_b)
        h_sup = max(self.h.direction_sup(r + v * s_a), self.h.direction_sup(r + v * s_hi))
        return s_hi, alpha * h_sup / h_min

    def sample_velocity(self, region, r, v, rng):
        envelope = self.h.direction_sup(r)
        while True:
            proposal = self.field.sample_pi_velocity(region, v, rng)
            weight = self.h.value(r, proposal)
            if weight >= envelope or rng.random() * envelope < weight:
                return proposal

    def alpha(self, r, v) -> float:
        r, v = np.asarray(r, dtype=float).reshape(-1), np.asarray(v, dtype=float).reshape(-1)
        return self.rate(self.field.region_of(r), r, v)

    def pi_density(self, r, v, v_out) -> float:
        '''
        h(r, v') pi(r, v, v') / int h pi.
        '''
        r, v = np.asarray(r, dtype=float).reshape(-1), np.asarray(v, dtype=float).reshape(-1)
        nodes, probs = self.field.pi_nodes(r, v)
        normaliser = float(probs @ self.h.values(r, nodes))
        return self.h.value(r, v_out) * self.field.pi_density(r, v, v_out) / normaliser

    def beta(self, r, v) -> float:
        return jump_term(self.h, self.field, r, v) + self.field.beta(r, v)


def h_rates(h: HFunction, field: CrossSectionField) -> HTransformedRates:
    return HTransformedRates(field, h)


def simulate_hnrw(field: CrossSectionField, h: HFunction, r0, v0, horizon: float,
                  rng: np.random.Generator, t_start: float = 0.0) -> NrwPath:
    '''
    Walk under (alpha^h, pi^h). Conservative h never lets it reach the boundary.
    '''
    r0 = np.asarray(r0, dtype=float).reshape(-1)
    v0 = np.asarray(v0, dtype=float).reshape(-1)
    check_interior(field.domain, r0, 'h-walk start')
    check_positive(h, r0, v0, h.value(r0, v0))
    return simulate_nrw(field, r0, v0, t_start, horizon, rng, rates=HTransformedRates(field, h))


def _affine_ratio_integral(n_a: float, n_b: float, d_a: float, d_b: float, width: float) -> float:
    '''
    int_0^width N/D ds for N, D affine with end values (n_a, n_b) and (d_a, d_b), D > 0.
    '''
    x = (d_b - d_a) / d_a
    n = n_b - n_a
    if abs(x) < 1e-4:
        return width / d_a * (n_a + n / 2.0 - x * (n_a / 2.0 + n / 3.0) + x * x * (n_a / 3.0 + n / 4.0))
    p, q = n / width, (d_b - d_a) / width
    return p / q * width + (n_a - p * d_a / q) / q * math.log1p(x)


def _jump_ratio_integral(h: HFunction, field: CrossSectionField, t_a: float, t_b: float,
                         r_a: np.ndarray, v: np.ndarray, region: int) -> float:
    '''
    int Jh/h along one linear piece. Exact between the jump breaks of h,
    adaptive quadrature when h is not piecewise affine along rays.
    '''
    duration = t_b - t_a
    alpha = field.materials[region].alpha
    if duration <= 0 or alpha == 0:
        return 0.0
    nodes, probs = field.region_pi_nodes(region, v)
    breaks = h.jump_breaks(r_a, v, nodes, duration)
    if breaks is None:
        return _quad_jump_ratio_integral(h, field, duration, r_a, v, region)
    edges = [0.0] + [s for s in breaks if 0.0 < s < duration] + [duration]
    ratio = 0.0
    for s_a, s_b in zip(edges[:-1], edges[1:]):
        if s_b <= s_a:
            continue
        r_start, r_end = r_a + v * s_a, r_a + v * s_b
        numerator = float(probs @ h.values(r_start, nodes)), float(probs @ h.values(r_end, nodes))
        ratio += _affine_ratio_integral(*numerator, h.value(r_start, v), h.value(r_end, v), s_b - s_a)
    return alpha * (ratio - float(probs.sum()) * duration)


def _quad_jump_ratio_integral(h: HFunction, field: CrossSectionField, duration: float,
                              r_a: np.ndarray, v: np.ndarray, region: int) -> float:
    def integrand(s):
        r = r_a + v * s
        return _jump_sum(h, field, region, r, v) / h.value(r, v)

    kinks = [s for s in h.ray_kinks(r_a, v, duration) if 0.0 < s < duration]
    value, _ = quad(integrand, 0.0, duration, points=kinks or None, epsabs=QUAD_TOLERANCE,
                    epsrel=QUAD_TOLERANCE, limit=500)
    return value


def log_h_correction(path: NrwPath, field: CrossSectionField, h: HFunction, t: float) -> float:
    '''
    log of h(r, v) exp(int_0^t Lh/h ds) / h(R_t, V_t) for a path alive at t.

    The transport part is exact: along each linear piece it is the log-ratio
    of h at the piece ends (same velocity). The jump part is exact where h is
    piecewise affine along rays and adaptive quadrature otherwise.
    '''
    transport = 0.0
    jump = 0.0
    for t_a, t_b, r_a, v, region in region_pieces(path, field, t):
        h_start = h.value(r_a, v)
        h_end = h.value(r_a + v * (t_b - t_a), v)
        check_positive(h, r_a, v, h_start)
        check_positive(h, r_a + v * (t_b - t_a), v, h_end)
        transport += math.log(h_end) - math.log(h_start)
        jump += _jump_ratio_integral(h, field, t_a, t_b, r_a, v, region)
    r_0, v_0 = path.positions[0], path.velocities[0]
    r_t, v_t = path.state_at(t)
    return (math.log(h.value(r_0, v_0)) - math.log(h.value(r_t, v_t))) + transport + jump


def log_product_correction(path: NrwPath, field: CrossSectionField, h: HFunction, t: float) -> float:
    '''
    Same quantity through the jump form: int_0^t Jh/h ds plus the log of
    prod_i h(R_Ti, V_(i-1)) / h(R_Ti, V_i) over the jumps before t.
    '''
    jump = sum(_jump_ratio_integral(h, field, t_a, t_b, r_a, v, region)
               for t_a, t_b, r_a, v, region in region_pieces(path, field, t))
    ratios = 0.0
    for i in range(1, len(path.times)):
        if path.times[i] > t:
            break
        r_i = path.positions[i]
        ratios += math.log(h.value(r_i, path.velocities[i - 1])) - math.log(h.value(r_i, path.velocities[i]))
    return jump + ratios


@dataclass(frozen=True)
class VarsigmaBounds:
    '''
    Attributes:
    lower (float): inf of (L + beta) h / h on the grid.
    upper (float): sup of (L + beta) h / h, inf when boundary refinement diverges.
    sup_lh (float): sup of Lh / h, inf when it diverges.
    diverges (bool): True when refinement towards the boundary blows up.
    refinement (tuple[float, ...]): sup Lh / h on successive boundary layers.
    '''
    lower: float
    upper: float
    sup_lh: float
    diverges: bool
    refinement: tuple[float, ...]


def phase_grid(field: CrossSectionField, n_positions: int = 50, n_directions: int = 16) -> list:
    '''
    States (r, v) on a position grid times the velocity grid.
    '''
    positions = field.domain.position_grid(n_positions)
    if field.domain.dim == 1:
        velocities = field.velocities.members
    else:
        velocities = angle_nodes(field.velocities.speed_max, n_directions)
    return [(r, v) for r in positions for v in velocities]


def _boundary_layer(field: CrossSectionField, delta: float) -> np.ndarray:
    domain = field.domain
    if domain.dim == 1:
        edge = domain.halfwidth * (1.0 - delta)
        return np.array([[-edge], [edge]])
    hx, hy = domain.half_x * (1.0 - delta), domain.half_y * (1.0 - delta)
    ticks = np.linspace(-0.8, 0.8, 5)
    points = [(hx, t * hy) for t in ticks] + [(-hx, t * hy) for t in ticks]
    points += [(t * hx, hy) for t in ticks] + [(t * hx, -hy) for t in ticks]
    return np.array(points)


def _lh_ratio(h: HFunction, field: CrossSectionField, r: np.ndarray, v: np.ndarray) -> float | None:
    value = h.value(r, v)
    if not value > 0:
        return None
    region = field.domain.region_index(r)
    return (h.transport(r, v) + _jump_sum(h, field, region, r, v)) / value


def varsigma_bounds(h: HFunction, field: CrossSectionField, grid: list | None = None,
                    refinement_levels: int = 6) -> VarsigmaBounds:
    '''
    Grid extrema of (Th + Jh)/h + beta and of (Th + Jh)/h; sup Lh/h is also
    tracked on boundary layers of relative width 10^-j, j = 1..refinement_levels,
    and reported infinite when the last two refinements each more than double it.
    '''
    grid = phase_grid(field) if grid is None else grid
    lower, upper, sup_lh = math.inf, -math.inf, -math.inf

    def visit(r, v):
        nonlocal lower, upper, sup_lh
        ratio = _lh_ratio(h, field, r, v)
        if ratio is None:
            return None
        shifted = ratio + field.materials[field.domain.region_index(r)].beta
        lower, upper, sup_lh = min(lower, shifted), max(upper, shifted), max(sup_lh, ratio)
        return ratio

    for r, v in grid:
        visit(np.asarray(r, dtype=float), np.asarray(v, dtype=float))

    velocities = sorted({tuple(np.asarray(v, dtype=float)) for _, v in grid})
    refinement = []
    for j in range(1, refinement_levels + 1):
        layer_sup = -math.inf
        for r in _boundary_layer(field, 10.0 ** -j):
            for v in velocities:
                ratio = visit(r, np.array(v))
                if ratio is not None:
                    layer_sup = max(layer_sup, ratio)
        refinement.append(layer_sup)

    diverges = len(refinement) >= 3 and all(
        b > 0 and b > 2.0 * max(a, 0.0) for a, b in zip(refinement[-3:-1], refinement[-2:]))
    if diverges:
        logger.warning(f'sup Lh/h diverges under boundary refinement: {refinement[-3:]}.')
        upper, sup_lh = math.inf, math.inf
    return VarsigmaBounds(lower, upper, sup_lh, diverges, tuple(refinement))
