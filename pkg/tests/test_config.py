import numpy as np
import pytest

from neutron_transport.config import (apply_overrides, build_field, build_h, build_weight, complexity_inputs,
                                      config_from_dict, initial_state, load_config, parse_override, slab_config)
from neutron_transport.estimators import BoxIndicator, ConstantWeight, PhiWeight
from neutron_transport.exceptions import ConfigError
from neutron_transport.geometry import Rect2D
from neutron_transport.htransform import LiftedH, PoweredH, Urts, UrtsProduct

SLAB = {
    'geometry': {'kind': 'interval', 'halfwidth': 1.0},
    'velocity': {'kind': 'two-point', 'v0': 1.0},
    'materials': [{'region': 0, 'sigma_s': 0.5, 'sigma_f': 1.0}],
    'run': {'mode': 'nbp', 'seed': 1},
}

FOUR_RODS = {
    'geometry': {'kind': 'rectangle', 'half_x': 1.0, 'half_y': 1.0,
                 'inclusions': [{'center': [x, y], 'radius': 0.2} for x in (-0.5, 0.5) for y in (-0.5, 0.5)]},
    'velocity': {'kind': 'fixed-speed', 'v0': 1.0, 'n_angle': 64},
    'materials': [{'region': 0, 'sigma_s': 1.0, 'sigma_f': 0.05}]
                 + [{'region': i, 'sigma_s': 0.5, 'sigma_f': 2.0} for i in range(1, 5)],
    'run': {'mode': 'hnrw', 'seed': 2},
}


def _slab(**sections):
    raw = {key: (value.copy() if isinstance(value, dict) else list(value)) for key, value in SLAB.items()}
    raw.update(sections)
    return config_from_dict(raw)


def test_unknown_keys_name_their_path():
    with pytest.raises(ConfigError) as error:
        _slab(run={'mode': 'nbp', 'seed': 1, 'horizon': 3})
    assert error.value.key == 'run.horizon'
    with pytest.raises(ConfigError) as error:
        _slab(materials=[{'region': 0, 'sigma_x': 1.0}])
    assert error.value.key == 'materials[0].sigma_x'
    with pytest.raises(ConfigError) as error:
        _slab(run={'mode': 'nbp', 'seed': 1, 'weight': {'kind': 'box', 'low': [0.0]}})
    assert error.value.key == 'run.weight.low'


def test_simulation_modes_need_a_seed():
    with pytest.raises(ConfigError) as error:
        _slab(run={'mode': 'smc'})
    assert error.value.key == 'run.seed'
    assert _slab(run={'mode': 'slab-oracle'}).seed is None


def test_unknown_mode():
    with pytest.raises(ConfigError) as error:
        _slab(run={'mode': 'teleport', 'seed': 1})
    assert error.value.key == 'run.mode'


def test_overrides_are_toml_literals():
    assert parse_override('run.k=500') == (['run', 'k'], 500)
    assert parse_override('run.t=[10.0, 20.0]') == (['run', 't'], [10.0, 20.0])
    assert parse_override('h.variant="slab-h3"') == (['h', 'variant'], 'slab-h3')
    assert parse_override('output.prefix=fig') == (['output', 'prefix'], 'fig')
    with pytest.raises(ConfigError):
        parse_override('run.k')
    raw = apply_overrides({'run': {'k': 1}}, ['run.k=7', 'plan.epsilon=0.1'])
    assert raw == {'run': {'k': 7}, 'plan': {'epsilon': 0.1}}


def test_load_config_applies_overrides(tmp_path):
    path = tmp_path / 'slab.toml'
    path.write_text('[geometry]\nhalfwidth = 1.0\n\n[[materials]]\nregion = 0\nsigma_s = 0.5\nsigma_f = 1.0\n\n'
                    '[run]\nmode = "nbp"\nseed = 3\nk = 10\n')
    config = load_config(path, ['run.k=20'])
    assert config.run['k'] == 20
    assert config.digest() != load_config(path).digest()
    assert config.digest() == load_config(path, ['run.k=20']).digest()


def test_missing_file_and_bad_toml(tmp_path):
    with pytest.raises(ConfigError) as error:
        load_config(tmp_path / 'absent.toml')
    assert error.value.key == 'config'
    broken = tmp_path / 'broken.toml'
    broken.write_text('[run\nmode = 1\n')
    with pytest.raises(ConfigError) as error:
        load_config(broken)
    assert error.value.key == 'config'


def test_four_rod_field():
    field = build_field(config_from_dict(FOUR_RODS))
    assert isinstance(field.domain, Rect2D)
    assert field.domain.n_regions == 5
    assert field.n_angle == 64
    assert field.region_of(np.array([0.5, 0.5])) != 0
    assert field.region_of(np.array([0.0, 0.0])) == 0


def test_malformed_region_names_its_key():
    raw = dict(FOUR_RODS, materials=FOUR_RODS['materials'][:4] + [{'region': 7, 'sigma_s': 1.0}])
    with pytest.raises(ConfigError) as error:
        build_field(config_from_dict(raw))
    assert error.value.key == 'materials[4].region'
    with pytest.raises(ConfigError) as error:
        build_field(config_from_dict(dict(FOUR_RODS, materials=FOUR_RODS['materials'][:4])))
    assert error.value.key == 'materials'


def test_negative_rate_names_its_material():
    with pytest.raises(ConfigError) as error:
        build_field(_slab(materials=[{'region': 0, 'sigma_s': -1.0}]))
    assert error.value.key.startswith('materials[0].')


def test_slab_config_and_initial_state():
    config = _slab()
    slab = slab_config(config)
    assert (slab.halfwidth, slab.v0, slab.sigma_s, slab.sigma_f) == (1.0, 1.0, 0.5, 1.0)
    r, v = initial_state(config, build_field(config))
    np.testing.assert_array_equal(r, [0.0])
    np.testing.assert_array_equal(v, [1.0])
    with pytest.raises(ConfigError):
        slab_config(config_from_dict(FOUR_RODS))


def test_weights():
    config = _slab()
    field = build_field(config)
    assert isinstance(build_weight(None, field, config), ConstantWeight)
    box = build_weight({'kind': 'box', 'lower': [-0.5], 'upper': [0.5], 'direction': 1}, field, config)
    assert isinstance(box, BoxIndicator) and box([0.0], [1.0]) == 1.0 and box([0.0], [-1.0]) == 0.0
    assert isinstance(build_weight({'kind': 'phi'}, field, config), PhiWeight)
    with pytest.raises(ConfigError) as error:
        build_weight({'kind': 'gauss'}, field, config, 'run.cost_f')
    assert error.value.key == 'run.cost_f.kind'


def test_h_variants():
    config = _slab(h={'variant': 'urts'})
    field = build_field(config)
    urts = build_h(config, field)
    assert isinstance(urts, Urts) and urts.r_shift == pytest.approx(2.0)
    assert isinstance(build_h(_slab(h={'variant': 'slab-h3'}), field), UrtsProduct)
    lifted = build_h(_slab(h={'variant': 'slab-h1', 'epsilon': 0.02, 'blend': 0.5}), field)
    assert isinstance(lifted, PoweredH) and isinstance(lifted.base, LiftedH)
    with pytest.raises(ConfigError) as error:
        build_h(_slab(h={'variant': 'spline'}), field)
    assert error.value.key == 'h.variant'


def test_complexity_inputs():
    assert complexity_inputs(_slab()) is None
    with pytest.raises(ConfigError) as error:
        complexity_inputs(_slab(plan={'kappa0': 1.0}))
    assert error.value.key == 'plan.kappa'
    constants = complexity_inputs(_slab(plan={'kappa0': 2.0, 'kappa': 3.0, 'lambda_star': 0.0}))
    assert constants is not None
