'''
Analytic oracle for the one-dimensional slab reactor.

D = (-L, L), V = {-v0, +v0}, constant sigma_s and sigma_f, scattering flips the
velocity and fission releases on average two neutrons at the parent velocity.
With theta = v0 / (2 L sigma_s) the principal eigenvalue and eigenfunctions are
explicit once the fixed point sinh(x)/x = theta (theta > 1) or
sin(x)/x = theta (theta < 1) is known.
'''
import logging
import math

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
import pandas as pd

from scipy.integrate import quad
from scipy.optimize import bisect

from neutron_transport.cost import ComplexityConstants
from neutron_transport.exceptions import ConfigError
from neutron_transport.geometry import Interval1D, TwoPoint1D
from neutron_transport.xsection import CrossSectionField, Material

logger = logging.getLogger(__name__)

Regime = Literal['theta_gt_1', 'theta_eq_1', 'theta_lt_1']

FISSION_MASS = 2.0
# E[N(N-1)] for Poisson(2) offspring
OFFSPRING_FACTORIAL_MOMENT = FISSION_MASS ** 2
QUAD_TOLERANCE = 1e-10
CRITICAL_TOLERANCE = 1e-12


def _scalar(x) -> float:
    return float(np.asarray(x, dtype=float).reshape(-1)[0])


@dataclass(frozen=True)
class SlabConfig:
    '''
    Attributes:
    halfwidth (float): L.
    v0 (float): Speed.
    sigma_s (float): Scatter rate.
    sigma_f (float): Fission rate.
    '''
    halfwidth: float
    v0: float
    sigma_s: float
    sigma_f: float

    def __post_init__(self):
        for name in ('halfwidth', 'v0', 'sigma_s', 'sigma_f'):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                logger.error(f"Slab parameter {name}={value} must be positive and finite.")
                raise ConfigError(f'{name} must be positive and finite, got {value}', f'slab.{name}')

    @property
    def theta(self) -> float:
        return self.v0 / (2.0 * self.halfwidth * self.sigma_s)


def to_field(config: SlabConfig, splits: tuple[float, ...] = ()) -> CrossSectionField:
    '''
    The slab as a cross-section field (optionally split into identical segments).
    '''
    domain = Interval1D(config.halfwidth, splits)
    material = Material(config.sigma_s, config.sigma_f, FISSION_MASS)
    return CrossSectionField(domain, TwoPoint1D(config.v0), (material,) * domain.n_regions)


def solve_fixed_point(theta: float) -> float:
    '''
    Smallest positive root of sinh(x)/x = theta (theta > 1) or of
    sin(x)/x = theta on (0, pi) (theta < 1); zero when theta = 1.
    '''
    if not theta > 0 or not math.isfinite(theta):
        raise ConfigError(f'theta must be positive and finite, got {theta}', 'slab')
    if theta == 1.0:
        return 0.0
    lower = 1e-12
    if theta > 1.0:
        def residual(x):
            return math.sinh(x) / x - theta

        upper = 1.0
        while residual(upper) <= 0:
            upper *= 2.0
        return bisect(residual, lower, upper, xtol=1e-13, maxiter=200)

    def residual(x):
        return math.sin(x) / x - theta

    return bisect(residual, lower, math.pi, xtol=1e-13, maxiter=200)


def fixed_point_residual(theta: float, x_star: float) -> float:
    if x_star == 0.0:
        return abs(1.0 - theta)
    ratio = math.sinh(x_star) / x_star if theta > 1.0 else math.sin(x_star) / x_star
    return abs(ratio - theta)


@dataclass(frozen=True)
class SlabEigen:
    '''
    Principal eigen-triple of the slab, normalised by phi(0, +v0) = phi_tilde(0, -v0) = 1.

    Attributes:
    config (SlabConfig): Slab parameters.
    lambda_star (float): Principal eigenvalue.
    x_star (float): Fixed-point root (0 when theta = 1).
    regime (Regime): Which closed form applies.
    '''
    config: SlabConfig
    lambda_star: float
    x_star: float
    regime: Regime

    def profile(self, r: float) -> float:
        '''
        phi(r, +v0); the other velocity is its reflection.
        '''
        L, x = self.config.halfwidth, self.x_star
        if self.regime == 'theta_eq_1':
            return 1.0 - r / L
        if self.regime == 'theta_gt_1':
            return math.sinh(0.5 * x * (1.0 - r / L)) / math.sinh(0.5 * x)
        return math.sin(0.5 * x * (1.0 - r / L)) / math.sin(0.5 * x)

    def profile_derivative(self, r: float) -> float:
        L, x = self.config.halfwidth, self.x_star
        if self.regime == 'theta_eq_1':
            return -1.0 / L
        if self.regime == 'theta_gt_1':
            return -0.5 * x / L * math.cosh(0.5 * x * (1.0 - r / L)) / math.sinh(0.5 * x)
        return -0.5 * x / L * math.cos(0.5 * x * (1.0 - r / L)) / math.sin(0.5 * x)

    @property
    def profile_max(self) -> float:
        x = self.x_star
        if self.regime == 'theta_eq_1':
            return 2.0
        if self.regime == 'theta_gt_1':
            return 2.0 * math.cosh(0.5 * x)
        peak = 1.0 if x > 0.5 * math.pi else math.sin(x)
        return peak / math.sin(0.5 * x)

    def phi(self, r, v) -> float:
        r = _scalar(r)
        return self.profile(r) if _scalar(v) > 0 else self.profile(-r)

    def phi_tilde(self, r, v) -> float:
        r = _scalar(r)
        return self.profile(-r) if _scalar(v) > 0 else self.profile(r)

    def transport_derivative(self, r, v) -> float:
        '''
        v . grad phi at (r, v).
        '''
        r, speed = _scalar(r), self.config.v0
        return speed * self.profile_derivative(r) if _scalar(v) > 0 else speed * self.profile_derivative(-r)

    @property
    def is_critical(self) -> bool:
        return abs(self.lambda_star) < CRITICAL_TOLERANCE


def eigen(config: SlabConfig) -> SlabEigen:
    theta = config.theta
    x_star = solve_fixed_point(theta)
    sigma_s, sigma_f = config.sigma_s, config.sigma_f
    scaled = config.v0 * x_star / (2.0 * config.halfwidth)
    if theta > 1.0:
        regime = 'theta_gt_1'
        lambda_star = sigma_f - sigma_s - math.sqrt(sigma_s ** 2 + scaled ** 2)
    elif theta == 1.0:
        regime = 'theta_eq_1'
        lambda_star = sigma_f - 2.0 * sigma_s
    else:
        regime = 'theta_lt_1'
        lambda_star = sigma_f - sigma_s - math.copysign(1.0, math.cos(x_star)) * math.sqrt(
            max(sigma_s ** 2 - scaled ** 2, 0.0))
    logger.info(f"Slab theta={theta:.6g} ({regime}): x*={x_star:.12g}, lambda*={lambda_star:.12g}.")
    return SlabEigen(config, lambda_star, x_star, regime)


def verify_eigen(eigen: SlabEigen, config: SlabConfig, grid=None, step: float = 1e-5) -> float:
    '''
    Max residual of d/dr (f+, f-) = M_lambda (f+, f-) by central differences on an interior grid,
    where f+(r) = phi(r, +v0), f-(r) = phi(r, -v0).
    '''
    L, v0 = config.halfwidth, config.v0
    grid = np.linspace(-L, L, 201)[1:-1] if grid is None else np.asarray(grid, dtype=float)
    a = eigen.lambda_star - config.sigma_f + config.sigma_s
    generator = np.array([[a, -config.sigma_s], [config.sigma_s, -a]]) / v0

    def state(r):
        return np.array([eigen.phi(r, v0), eigen.phi(r, -v0)])

    residual = 0.0
    for r in grid:
        derivative = (state(r + step) - state(r - step)) / (2.0 * step)
        residual = max(residual, float(np.max(np.abs(derivative - generator @ state(r)))))
    return residual


def inner_product(f: Callable, g: Callable, config: SlabConfig) -> float:
    '''
    <f, g> = sum over v in {-v0, v0} of the integral of f(r, v) g(r, v) over (-L, L).
    '''
    L = config.halfwidth
    total = 0.0
    for v in (-config.v0, config.v0):
        value, _ = quad(lambda r: f(r, v) * g(r, v), -L, L, epsabs=QUAD_TOLERANCE, limit=200)
        total += value
    return total


def _normalised_phi_tilde(eigen: SlabEigen, config: SlabConfig) -> Callable:
    '''
    phi_tilde rescaled so that <phi, phi_tilde> = 1.
    '''
    norm = inner_product(eigen.phi, eigen.phi_tilde, config)
    return lambda r, v: eigen.phi_tilde(r, v) / norm


def _as_slab_function(g: Callable) -> Callable:
    return lambda r, v: float(g(np.array([_scalar(r)]), np.array([_scalar(v)])))


def _is_phi_aligned(g: Callable, eigen: SlabEigen, config: SlabConfig, coefficient: float) -> bool:
    grid = np.linspace(-config.halfwidth, config.halfwidth, 41)[1:-1]
    values = [(g(r, v), coefficient * eigen.phi(r, v)) for r in grid for v in (-config.v0, config.v0)]
    scale = max(max(abs(a) for a, _ in values), 1e-300)
    return all(abs(a - b) <= 1e-9 * scale for a, b in values)


@dataclass(frozen=True)
class VarianceConstants:
    '''
    Attributes:
    c0 (float): <phi_tilde, g> phi(r, v).
    c1 (float | None): Critical variance growth constant.
    c2 (float | None): Supercritical constant.
    c3 (float | None): Subcritical constant.
    approximate (bool): True when a semigroup integral was replaced by its spectral limit.
    '''
    c0: float
    c1: float | None = None
    c2: float | None = None
    c3: float | None = None
    approximate: bool = False


def variance_constants(eigen: SlabEigen, config: SlabConfig, g: Callable, r, v) -> VarianceConstants:
    '''
    Second-moment constants of the branching estimator started from (r, v).

    eta_f[f] = sigma_f E[N(N-1)] f^2 = 4 sigma_f f^2 for Poisson(2) offspring at the parent velocity.
    The semigroup acts exactly on multiples of phi, other arguments use
    psi_s[f] ~ exp(lambda* s) <f, phi_tilde> phi and are flagged approximate.
    '''
    g = _as_slab_function(g)
    phi_tilde = _normalised_phi_tilde(eigen, config)
    lam = eigen.lambda_star
    phi_rv = eigen.phi(r, v)
    g_phi = inner_product(g, phi_tilde, config)
    eta_phi = config.sigma_f * OFFSPRING_FACTORIAL_MOMENT * inner_product(
        lambda x, u: eigen.phi(x, u) ** 2, phi_tilde, config)
    c0 = g_phi * phi_rv

    if eigen.is_critical:
        return VarianceConstants(c0, c1=eta_phi * g_phi ** 2 * phi_rv)
    if lam > 0:
        c2 = g_phi ** 2 * (eta_phi * phi_rv / lam - phi_rv ** 2)
        return VarianceConstants(c0, c2=max(c2, 0.0), approximate=True)

    g_squared = inner_product(lambda x, u: g(x, u) ** 2, phi_tilde, config)
    c3 = phi_rv * (g_squared - g_phi ** 2 * eta_phi / lam)
    aligned = _is_phi_aligned(g, eigen, config, g_phi)
    if not aligned:
        logger.info('Weight function is not aligned with phi: subcritical constant is approximate.')
    return VarianceConstants(c0, c3=c3, approximate=not aligned)


def cost_constant(eigen: SlabEigen, config: SlabConfig, f: Callable, g: Callable, r, v) -> float:
    '''
    kappa_4 = <sigma_s pi_s[f] + sigma_f pi_f[g], phi_tilde> phi(r, v), the
    asymptotic cost rate of one critical branching sample.
    '''
    f, g = _as_slab_function(f), _as_slab_function(g)
    phi_tilde = _normalised_phi_tilde(eigen, config)

    def rate(x, u):
        return config.sigma_s * f(x, -u) + config.sigma_f * FISSION_MASS * g(x, u)

    return inner_product(rate, phi_tilde, config) * eigen.phi(r, v)


def complexity_constants(eigen: SlabEigen, config: SlabConfig, g: Callable, r, v,
                         eta: float = 1e-3, cost_rate: float = 1.0) -> ComplexityConstants:
    '''
    kappa_0 = 2 (ln(C0) e^lambda*)^2 + eta and kappa_i = 2 C_i / C0^2 + eta.
    '''
    constants = variance_constants(eigen, config, g, r, v)
    if constants.c0 <= 0:
        logger.error("Couldn't derive complexity constants: <phi_tilde, g> phi(r, v) is not positive.")
        raise ConfigError('weight function has zero overlap with phi_tilde', 'plan')
    kappa0 = 2.0 * (math.log(constants.c0) * math.exp(eigen.lambda_star)) ** 2 + eta
    c_i = next(c for c in (constants.c1, constants.c2, constants.c3) if c is not None)
    return ComplexityConstants(kappa0=kappa0, kappa=2.0 * c_i / constants.c0 ** 2 + eta,
                               lambda_star=eigen.lambda_star, cost_rate=cost_rate)


def tabulate(eigen: SlabEigen, n: int = 101) -> pd.DataFrame:
    '''
    phi and phi_tilde on a grid of n interior points.
    '''
    L, v0 = eigen.config.halfwidth, eigen.config.v0
    positions = np.linspace(-L, L, n + 2)[1:-1]
    return pd.DataFrame({
        'r': positions,
        'phi_plus': [eigen.phi(r, v0) for r in positions],
        'phi_minus': [eigen.phi(r, -v0) for r in positions],
        'phi_tilde_plus': [eigen.phi_tilde(r, v0) for r in positions],
        'phi_tilde_minus': [eigen.phi_tilde(r, -v0) for r in positions],
    })


def oracle_summary(eigen: SlabEigen) -> dict:
    return {
        'theta': eigen.config.theta,
        'regime': eigen.regime,
        'x_star': eigen.x_star,
        'lambda_star': eigen.lambda_star,
    }
