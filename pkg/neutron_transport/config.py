'''
TOML run configuration: parsing, key validation, overrides and builders for
the simulation inputs.
'''
import hashlib
import json
import logging
import tomllib

from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from neutron_transport.cost import ComplexityConstants
from neutron_transport.estimators import BoxIndicator, ConstantWeight, PhiWeight, WeightFunction
from neutron_transport.exceptions import ConfigError
from neutron_transport.geometry import Annulus2D, Circle, FixedSpeed2D, Interval1D, Rect2D, TwoPoint1D
from neutron_transport.htransform import (ConstantH, DirectionalDistance, EigenH, HFunction, LiftedH, PoweredH,
                                          Urts, UrtsProduct, slab_h1, slab_h2, slab_h3)
from neutron_transport.slab1d import FISSION_MASS, SlabConfig, eigen
from neutron_transport.xsection import CrossSectionField, Material

logger = logging.getLogger(__name__)

MODES = ('nrw', 'nbp', 'hnrw', 'smc', 'slab-oracle', 'plan-budget', 'heatmap', 'cost', 'ratio-map')
SIMULATION_MODES = ('nrw', 'nbp', 'hnrw', 'smc', 'heatmap', 'cost', 'ratio-map')

SCHEMA = {
    'geometry': {'kind', 'halfwidth', 'splits', 'half_x', 'half_y', 'inclusions'},
    'velocity': {'kind', 'v0', 'vmin', 'vmax', 'n_angle'},
    'materials': {'region', 'sigma_s', 'sigma_f', 'fission_mass'},
    'run': {'mode', 'seed', 't', 'k', 'M', 'r', 'v', 'iterations', 'population_cap', 'weight', 'cost_f',
            'cost_g', 'n_particles', 'delta', 'ess_threshold', 'dynamics', 'workers'},
    'h': {'variant', 'c', 'c1', 'c2', 'r_shift', 'epsilon', 'value', 'blend'},
    'plan': {'regime', 'epsilon', 'eta', 'cost_rate', 'kappa0', 'kappa', 'lambda_star', 'lambda_second'},
    'heatmap': {'nx', 'ny', 'n_sectors', 'estimator'},
    'ratio': {'n_positions', 'n_directions', 'estimator'},
    'output': {'directory', 'prefix'},
}
NESTED = {
    'geometry.inclusions': {'center', 'radius'},
    'run.weight': {'kind', 'value', 'lower', 'upper', 'direction'},
    'run.cost_f': {'kind', 'value', 'lower', 'upper', 'direction'},
    'run.cost_g': {'kind', 'value', 'lower', 'upper', 'direction'},
}


@dataclass
class RunConfig:
    '''
    Attributes:
    geometry (dict): Domain section.
    velocity (dict): Velocity space section.
    materials (list[dict]): One table per region id.
    run (dict): Mode, seed, horizons, cycles and initial state.
    h (dict): h-function variant and parameters.
    plan (dict): Budget planner inputs.
    heatmap (dict): Occupation histogram bins.
    ratio (dict): State grid of the eigenfunction ratio map.
    output (dict): Output directory and file prefix.
    '''
    geometry: dict
    velocity: dict
    materials: list
    run: dict
    h: dict
    plan: dict
    heatmap: dict
    ratio: dict
    output: dict

    @property
    def mode(self) -> str:
        return self.run.get('mode', 'nbp')

    @property
    def seed(self) -> int | None:
        return self.run.get('seed')

    def as_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        canonical = json.dumps(self.as_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def _check_keys(table: dict, allowed: set, path: str):
    for key in table:
        if key not in allowed:
            logger.error(f"Unknown configuration key {path}.{key}.")
            raise ConfigError('unknown key', f'{path}.{key}')


def check_schema(raw: dict):
    '''
    Rejects unknown keys at every level, naming the dotted key path.
    '''
    _check_keys(raw, set(SCHEMA), '<root>')
    for section, allowed in SCHEMA.items():
        value = raw.get(section, [] if section == 'materials' else {})
        if section == 'materials':
            if not isinstance(value, list):
                raise ConfigError('expected an array of tables', 'materials')
            for i, table in enumerate(value):
                _check_keys(table, allowed, f'materials[{i}]')
            continue
        if not isinstance(value, dict):
            raise ConfigError('expected a table', section)
        _check_keys(value, allowed, section)
    for path, allowed in NESTED.items():
        section, key = path.split('.')
        value = raw.get(section, {}).get(key)
        if value is None:
            continue
        tables = value if isinstance(value, list) else [value]
        for i, table in enumerate(tables):
            if not isinstance(table, dict):
                raise ConfigError('expected a table', path)
            _check_keys(table, allowed, f'{path}[{i}]' if isinstance(value, list) else path)


def parse_override(text: str) -> tuple[list[str], object]:
    '''
    "a.b=c" -> (["a", "b"], c) with c read as a TOML value, else kept as a string.
    '''
    if '=' not in text:
        raise ConfigError(f'override {text!r} is not of the form key=value', text)
    key, raw_value = text.split('=', 1)
    try:
        value = tomllib.loads(f'value = {raw_value}')['value']
    except tomllib.TOMLDecodeError:
        value = raw_value
    return key.strip().split('.'), value


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    for override in overrides:
        keys, value = parse_override(override)
        table = raw
        for key in keys[:-1]:
            table = table.setdefault(key, {})
            if not isinstance(table, dict):
                raise ConfigError('cannot override inside a non-table value', '.'.join(keys))
        table[keys[-1]] = value
    return raw


def load_config(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    try:
        with open(path, 'rb') as file:
            raw = tomllib.load(file)
    except FileNotFoundError:
        logger.error(f"Configuration file {path} does not exist.")
        raise ConfigError(f'file {path} not found', 'config')
    except tomllib.TOMLDecodeError as error:
        logger.error(f"Configuration file {path} is not valid TOML: {error}.")
        raise ConfigError(f'invalid TOML: {error}', 'config')
    return config_from_dict(apply_overrides(raw, overrides or []))


def config_from_dict(raw: dict) -> RunConfig:
    check_schema(raw)
    config = RunConfig(**{section: raw.get(section, [] if section == 'materials' else {}) for section in SCHEMA})
    if config.mode not in MODES:
        raise ConfigError(f'unknown mode {config.mode!r}; expected one of {MODES}', 'run.mode')
    if config.mode in SIMULATION_MODES and config.seed is None:
        logger.error(f"Mode {config.mode} needs run.seed.")
        raise ConfigError('a seed is mandatory for simulation modes', 'run.seed')
    return config


def as_list(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


def build_domain(config: RunConfig):
    geometry = config.geometry
    kind = geometry.get('kind', 'interval')
    if kind == 'interval':
        return Interval1D(float(geometry.get('halfwidth', 1.0)), tuple(geometry.get('splits', ())))
    if kind == 'rectangle':
        inclusions = []
        for i, rod in enumerate(geometry.get('inclusions', [])):
            if 'center' not in rod or 'radius' not in rod:
                raise ConfigError('inclusion needs center and radius', f'geometry.inclusions[{i}]')
            inclusions.append(Circle(tuple(rod['center']), float(rod['radius'])))
        return Rect2D(float(geometry.get('half_x', 1.0)), float(geometry.get('half_y', 1.0)), tuple(inclusions))
    raise ConfigError(f'unknown geometry {kind!r}', 'geometry.kind')


def build_velocities(config: RunConfig):
    velocity = config.velocity
    kind = velocity.get('kind', 'two-point')
    if kind == 'two-point':
        return TwoPoint1D(float(velocity.get('v0', 1.0)))
    if kind == 'fixed-speed':
        return FixedSpeed2D(float(velocity.get('v0', 1.0)))
    if kind == 'annulus':
        return Annulus2D(float(velocity.get('vmin', 0.5)), float(velocity.get('vmax', 1.0)))
    raise ConfigError(f'unknown velocity space {kind!r}', 'velocity.kind')


def build_field(config: RunConfig) -> CrossSectionField:
    '''
    The cross-section field; materials are matched to region ids 0..n-1.
    '''
    domain = build_domain(config)
    materials: dict[int, Material] = {}
    for i, table in enumerate(config.materials):
        region = table.get('region')
        if not isinstance(region, int) or isinstance(region, bool) or not 0 <= region < domain.n_regions:
            logger.error(f"Material {i} names region {region!r}; the domain has {domain.n_regions} regions.")
            raise ConfigError(f'region id must be an integer in [0, {domain.n_regions})', f'materials[{i}].region')
        if region in materials:
            raise ConfigError(f'region {region} defined twice', f'materials[{i}].region')
        try:
            materials[region] = Material(float(table.get('sigma_s', 0.0)), float(table.get('sigma_f', 0.0)),
                                         float(table.get('fission_mass', FISSION_MASS)))
        except ConfigError as error:
            raise ConfigError(str(error).split(': ', 1)[-1], f'materials[{i}].{error.key}') from error
    missing = [region for region in range(domain.n_regions) if region not in materials]
    if missing:
        raise ConfigError(f'no material for regions {missing}', 'materials')
    return CrossSectionField(domain, build_velocities(config), tuple(materials[i] for i in range(domain.n_regions)),
                             n_angle=int(config.velocity.get('n_angle', 128)))


def slab_config(config: RunConfig) -> SlabConfig:
    '''
    The analytic slab behind a homogeneous interval configuration.
    '''
    field = build_field(config)
    if not isinstance(field.domain, Interval1D) or not isinstance(field.velocities, TwoPoint1D):
        raise ConfigError('the slab oracle needs an interval with two-point velocities', 'geometry.kind')
    first = field.materials[0]
    if any(m != first for m in field.materials) or first.fission_mass != FISSION_MASS:
        raise ConfigError('the slab oracle needs homogeneous materials with fission_mass = 2', 'materials')
    return SlabConfig(field.domain.halfwidth, field.velocities.v0, first.sigma_s, first.sigma_f)


def initial_state(config: RunConfig, field: CrossSectionField) -> tuple[np.ndarray, np.ndarray]:
    run = config.run
    dim = field.domain.dim
    default_v = [field.velocities.speed_max] + [0.0] * (dim - 1)
    r = np.asarray(run.get('r', [0.0] * dim), dtype=float).reshape(-1)
    v = np.asarray(run.get('v', default_v), dtype=float).reshape(-1)
    if r.shape != (dim,) or v.shape != (dim,):
        raise ConfigError(f'initial state must have dimension {dim}', 'run.r')
    return r, v


def build_weight(table: dict | None, field: CrossSectionField, config: RunConfig, key: str = 'run.weight') -> WeightFunction:
    table = table or {'kind': 'constant', 'value': 1.0}
    kind = table.get('kind', 'constant')
    if kind == 'constant':
        return ConstantWeight(float(table.get('value', 1.0)))
    if kind == 'box':
        if 'lower' not in table or 'upper' not in table:
            raise ConfigError('box weight needs lower and upper', key)
        return BoxIndicator(tuple(map(float, table['lower'])), tuple(map(float, table['upper'])), table.get('direction'))
    if kind == 'phi':
        return PhiWeight(eigen(slab_config(config)))
    raise ConfigError(f'unknown weight {kind!r}', f'{key}.kind')


def build_h(config: RunConfig, field: CrossSectionField) -> HFunction:
    '''
    The configured h-function, lifted by h.epsilon and powered by h.blend when present.
    '''
    table = config.h
    variant = table.get('variant', 'constant')
    domain = field.domain
    if variant == 'constant':
        h = ConstantH(float(table.get('value', 1.0)))
    elif variant == 'directional':
        h = DirectionalDistance(domain, float(table.get('c', 1.0)))
    elif variant == 'urts':
        default_shift = field.velocities.speed_max / max(field.materials[0].sigma_s, 1e-300)
        h = Urts(domain, float(table.get('c1', 1.0)), float(table.get('c2', 1.0)),
                 float(table.get('r_shift', default_shift)))
    elif variant == 'urts-product':
        h = UrtsProduct(domain, float(table.get('c', 1.0)), float(table.get('r_shift', 0.0)))
    elif variant in ('slab-h1', 'slab-h2', 'slab-h3', 'eigen'):
        slab = slab_config(config)
        domain = field.domain
        h = {
            'slab-h1': lambda: slab_h1(domain, slab.v0, slab.sigma_s),
            'slab-h2': lambda: slab_h2(domain),
            'slab-h3': lambda: slab_h3(domain, slab.v0, slab.sigma_s),
            'eigen': lambda: EigenH(eigen(slab)),
        }[variant]()
    else:
        raise ConfigError(f'unknown h variant {variant!r}', 'h.variant')
    if 'epsilon' in table:
        h = LiftedH(h, float(table['epsilon']))
    if 'blend' in table and float(table['blend']) != 1.0:
        h = PoweredH(h, float(table['blend']))
    return h


def complexity_inputs(config: RunConfig) -> ComplexityConstants | None:
    '''
    Explicit planner constants, or None when they are to be derived from the slab oracle.
    '''
    plan = config.plan
    if 'kappa0' not in plan:
        return None
    for key in ('kappa', 'lambda_star'):
        if key not in plan:
            raise ConfigError('explicit constants need kappa0, kappa and lambda_star', f'plan.{key}')
    return ComplexityConstants(float(plan['kappa0']), float(plan['kappa']), float(plan['lambda_star']),
                               plan.get('lambda_second'), float(plan.get('cost_rate', 1.0)))
