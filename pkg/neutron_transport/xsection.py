'''
Piecewise-constant cross-section fields and the rates they induce.

A neutron scatters at rate sigma_s with outgoing law pi_s and fissions at rate
sigma_f with offspring intensity pi_f of total mass m. The single-particle walk
uses the combined rate alpha = sigma_s + sigma_f * m with normalised kernel pi,
and the multiplicative potential beta = sigma_f * (m - 1).
'''
import functools
import logging
import math

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from neutron_transport.exceptions import ConfigError
from neutron_transport.geometry import Domain, VelocitySpace, angle_nodes, check_interior

logger = logging.getLogger(__name__)

StateFunction = Callable[[np.ndarray, np.ndarray], float]


@dataclass(frozen=True)
class Material:
    '''
    Cross-sections of one region.

    Attributes:
    sigma_s (float): Scatter rate (1/time).
    sigma_f (float): Fission rate (1/time).
    fission_mass (float): Mean number of fission offspring m.
    '''
    sigma_s: float
    sigma_f: float
    fission_mass: float = 2.0

    def __post_init__(self):
        for name in ('sigma_s', 'sigma_f', 'fission_mass'):
            value = getattr(self, name)
            if math.isnan(value) or value < 0:
                raise ConfigError(f'{name} must be a nonnegative number, got {value}', name)

    @property
    def alpha(self) -> float:
        return self.sigma_s + self.sigma_f * self.fission_mass

    @property
    def beta(self) -> float:
        return self.sigma_f * (self.fission_mass - 1.0)

    @property
    def is_finite(self) -> bool:
        return all(math.isfinite(x) for x in (self.sigma_s, self.sigma_f, self.fission_mass))


class VelocityKernel(ABC):
    '''
    Probability kernel v -> v' on the velocity space.
    '''

    @abstractmethod
    def nodes(self, v: np.ndarray, n_angle: int) -> tuple[np.ndarray, np.ndarray]:
        '''
        Discrete representation (velocities, probabilities) used for integrals.
        '''

    @abstractmethod
    def sample(self, v: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...

    @abstractmethod
    def density(self, v: np.ndarray, v_out: np.ndarray) -> float:
        '''
        Point mass (1D) or density with respect to the outgoing angle (2D).
        '''


class FlipSign1D(VelocityKernel):
    '''
    pi(v, .) = delta_{-v}.
    '''

    def nodes(self, v, n_angle):
        return -v.reshape(1, -1), np.ones(1)

    def sample(self, v, rng):
        return -v

    def density(self, v, v_out):
        return float(np.allclose(v_out, -v))


class SameDirection1D(VelocityKernel):
    '''
    pi(v, .) = delta_v, offspring keep the parent velocity.
    '''

    def nodes(self, v, n_angle):
        return v.reshape(1, -1), np.ones(1)

    def sample(self, v, rng):
        return v.copy()

    def density(self, v, v_out):
        return float(np.allclose(v_out, v))


class UniformAngle2D(VelocityKernel):
    '''
    Outgoing direction uniform on the circle, speed kept.
    '''

    def nodes(self, v, n_angle):
        return _cached_angle_nodes(float(math.hypot(*v)), n_angle), _uniform_weights(n_angle)

    def sample(self, v, rng):
        angle = rng.uniform(0.0, 2.0 * math.pi)
        return math.hypot(*v) * np.array([math.cos(angle), math.sin(angle)])

    def density(self, v, v_out):
        return 1.0 / (2.0 * math.pi)


@functools.lru_cache(maxsize=64)
def _cached_angle_nodes(speed: float, n_angle: int) -> np.ndarray:
    nodes = angle_nodes(speed, n_angle)
    nodes.setflags(write=False)
    return nodes


@functools.lru_cache(maxsize=16)
def _uniform_weights(n_angle: int) -> np.ndarray:
    weights = np.full(n_angle, 1.0 / n_angle)
    weights.setflags(write=False)
    return weights


@dataclass(frozen=True)
class CrossSectionField:
    '''
    Region-wise constant cross-sections over a domain and velocity space.

    Attributes:
    domain (Domain): Spatial domain; region ids index materials.
    velocities (VelocitySpace): Velocity space.
    materials (tuple[Material, ...]): One material per region id.
    n_angle (int): Number of trapezoid nodes for 2D velocity integrals.
    scatter_kernel (VelocityKernel): pi_s shape, defaults by dimension.
    fission_kernel (VelocityKernel): pi_f shape (normalised), defaults by dimension.
    '''
    domain: Domain
    velocities: VelocitySpace
    materials: tuple[Material, ...]
    n_angle: int = 128
    scatter_kernel: VelocityKernel = field(default=None)
    fission_kernel: VelocityKernel = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, 'materials', tuple(self.materials))
        if len(self.materials) != self.domain.n_regions:
            raise ConfigError(f'expected {self.domain.n_regions} region materials, got {len(self.materials)}',
                              'materials')
        if self.domain.dim != self.velocities.dim:
            raise ConfigError('domain and velocity space dimensions differ', 'velocity')
        if self.n_angle < 4:
            raise ConfigError(f'n_angle must be at least 4, got {self.n_angle}', 'velocity.n_angle')
        if self.scatter_kernel is None:
            object.__setattr__(self, 'scatter_kernel', FlipSign1D() if self.domain.dim == 1 else UniformAngle2D())
        if self.fission_kernel is None:
            object.__setattr__(self, 'fission_kernel', SameDirection1D() if self.domain.dim == 1 else UniformAngle2D())

    def region_of(self, r) -> int:
        return self.domain.region_of(r)

    def material_at(self, r) -> Material:
        return self.materials[self.domain.region_of(r)]

    def alpha(self, r, v=None) -> float:
        return self.material_at(r).alpha

    def beta(self, r, v=None) -> float:
        return self.material_at(r).beta

    @property
    def beta_bounds(self) -> tuple[float, float]:
        '''
        (inf beta, sup beta) over the field.
        '''
        betas = [m.beta for m in self.materials]
        return min(betas), max(betas)

    @property
    def alpha_max(self) -> float:
        return max(m.alpha for m in self.materials)

    def check_finite(self):
        for i, material in enumerate(self.materials):
            if not material.is_finite:
                logger.error(f"Region {i} has non-finite rates {material}.")
                raise ConfigError(f'non-finite rates in region {i}', f'materials[{i}]')

    def region_pi_nodes(self, region: int, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        '''
        Outgoing velocities and probabilities of the combined kernel pi in a region.
        '''
        material = self.materials[region]
        s_nodes, s_probs = self.scatter_kernel.nodes(v, self.n_angle)
        f_nodes, f_probs = self.fission_kernel.nodes(v, self.n_angle)
        alpha = material.alpha
        if alpha == 0:
            return s_nodes, np.zeros_like(s_probs)
        s_share = material.sigma_s / alpha
        f_share = material.sigma_f * material.fission_mass / alpha
        if s_nodes is f_nodes:
            return s_nodes, s_share * s_probs + f_share * f_probs
        return np.vstack([s_nodes, f_nodes]), np.concatenate([s_share * s_probs, f_share * f_probs])

    def pi_nodes(self, r, v) -> tuple[np.ndarray, np.ndarray]:
        return self.region_pi_nodes(self.domain.region_of(r), np.asarray(v, dtype=float))

    def pi_density(self, r, v, v_out) -> float:
        material = self.material_at(r)
        if material.alpha == 0:
            return 0.0
        v, v_out = np.asarray(v, dtype=float), np.asarray(v_out, dtype=float)
        return (material.sigma_s * self.scatter_kernel.density(v, v_out)
                + material.sigma_f * material.fission_mass * self.fission_kernel.density(v, v_out)) / material.alpha

    def pi_s_action(self, r, v, f: StateFunction) -> float:
        '''
        pi_s[f](r, v) = integral of f(r, v') pi_s(r, v, dv').
        '''
        nodes, probs = self.scatter_kernel.nodes(np.asarray(v, dtype=float), self.n_angle)
        return float(sum(p * f(r, u) for u, p in zip(nodes, probs)))

    def pi_f_action(self, r, v, g: StateFunction) -> float:
        '''
        pi_f[g](r, v) = integral of g(r, v') pi_f(r, v, dv'), including the mass m.
        '''
        material = self.material_at(r)
        nodes, probs = self.fission_kernel.nodes(np.asarray(v, dtype=float), self.n_angle)
        return material.fission_mass * float(sum(p * g(r, u) for u, p in zip(nodes, probs)))

    def sample_pi_velocity(self, region: int, v: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        material = self.materials[region]
        if rng.random() * material.alpha < material.sigma_s:
            return self.scatter_kernel.sample(v, rng)
        return self.fission_kernel.sample(v, rng)

    def sample_scatter_velocity(self, region: int, v: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.scatter_kernel.sample(v, rng)

    def sample_offspring(self, region: int, v: np.ndarray, rng: np.random.Generator) -> list[np.ndarray]:
        '''
        Poisson(m) children with velocities i.i.d. from the normalised fission kernel.
        '''
        n_children = rng.poisson(self.materials[region].fission_mass)
        return [self.fission_kernel.sample(v, rng) for _ in range(n_children)]

    def validate(self) -> list[str]:
        '''
        Returns the violated standing assumptions (H1)-(H3); (H4) is only logged.
        '''
        violations = []
        for i, material in enumerate(self.materials):
            if not material.is_finite:
                violations.append(f'(H1) region {i}: rates must be finite, got {material}')
        for i, material in enumerate(self.materials):
            if not self._kernel_covers_velocities(material):
                violations.append(f'(H2) region {i}: sigma_s*pi_s + sigma_f*pi_f vanishes for some velocity pair')
        if not any(m.sigma_f * m.fission_mass > 0 for m in self.materials):
            violations.append('(H3) no fissile region: sigma_f*pi_f is zero everywhere')
        logger.info('(H4) fission offspring are Poisson distributed and therefore not bounded in number.')
        for violation in violations:
            logger.warning(violation)
        return violations

    def _kernel_covers_velocities(self, material: Material) -> bool:
        if self.domain.dim == 1:
            # the flip kernel only reaches -v, the fission kernel only +v
            return material.sigma_s > 0 and material.sigma_f * material.fission_mass > 0
        return material.alpha > 0
