import json

from pathlib import Path

import pandas as pd
import pytest

from neutron_transport.cli import main, regime_of

CONFIGS = Path(__file__).resolve().parent.parent / 'configs'

TINY_SLAB = '''
[geometry]
halfwidth = 0.01

[velocity]
v0 = 10.0

[[materials]]
region = 0
sigma_s = 0.1
sigma_f = 0.1

[run]
mode = "nbp"
seed = 5
t = 5.0
k = 5
'''


def _run(tmp_path, *argv) -> int:
    return main([argv[0], *argv[1:], '--output-dir', str(tmp_path)])


def _manifest(directory: Path, prefix: str) -> dict:
    return json.loads((directory / f'{prefix}-manifest.json').read_text())


def _write(tmp_path, text: str, name: str = 'case.toml') -> Path:
    path = tmp_path / name
    path.write_text(text)
    return path


def test_slab_oracle(tmp_path):
    assert _run(tmp_path, 'slab-oracle', str(CONFIGS / 'slab.toml')) == 0
    report = json.loads((tmp_path / 'slab-oracle.json').read_text())
    assert report['lambda_star'] == pytest.approx(0.0, abs=1e-12)
    assert report['ode_residual'] < 1e-6
    table = pd.read_csv(tmp_path / 'slab-eigenfunctions.csv')
    assert list(table.columns) == ['r', 'phi_plus', 'phi_minus', 'phi_tilde_plus', 'phi_tilde_minus']
    manifest = _manifest(tmp_path, 'slab')
    assert manifest['status'] == 'ok' and manifest['exit_code'] == 0
    assert manifest['mode'] == 'slab-oracle'
    assert set(manifest['versions']) >= {'neutron_transport', 'numpy', 'scipy', 'pandas', 'mesa'}


def test_plan_budget(tmp_path):
    assert _run(tmp_path, 'plan-budget', str(CONFIGS / 'plan-critical.toml')) == 0
    plan = pd.read_csv(tmp_path / 'plan-critical-plan.csv')
    assert list(plan['epsilon']) == [0.2, 0.1, 0.05]
    assert set(plan['regime']) == {'critical'}
    assert (plan['k'].diff().dropna() > 0).all()
    plans = json.loads((tmp_path / 'plan-critical-plan.json').read_text())
    assert [entry['epsilon'] for entry in plans] == [0.2, 0.1, 0.05]
    for entry, (_, row) in zip(plans, plan.iterrows()):
        assert {'k', 't', 'predicted_cost'} <= set(entry)
        assert entry['k'] == row['k']
        assert entry['t'] == pytest.approx(row['t'])


def test_plan_budget_single_epsilon_is_one_object(tmp_path):
    assert _run(tmp_path, 'plan-budget', str(CONFIGS / 'plan-critical.toml'), '--set', 'plan.epsilon=0.1') == 0
    plan = json.loads((tmp_path / 'plan-critical-plan.json').read_text())
    assert isinstance(plan, dict)
    assert {'k', 't', 'predicted_cost'} <= set(plan)
    assert plan['k'] >= 1 and plan['t'] > 0 and plan['predicted_cost'] > 0


def test_cost_mode_writes_the_cost_columns(tmp_path):
    path = _write(tmp_path, TINY_SLAB)
    overrides = ['--set', 'run.mode="cost"', '--set', 'run.t=[1.0, 2.0]']
    assert _run(tmp_path, 'run', str(path), *overrides) == 0
    frame = pd.read_csv(tmp_path / 'run-cost.csv')
    assert list(frame.columns[:4]) == ['t', 'cost_cpu', 'cost_mem', 'compensator']
    assert list(frame['t']) == [1.0, 2.0]
    assert (frame['cost_mem'] >= 1.0).all()


def test_ratio_map_mode(tmp_path):
    overrides = ['--set', 'run.mode="ratio-map"', '--set', 'run.t=2.0', '--set', 'run.k=100',
                 '--set', 'ratio.n_positions=3']
    assert _run(tmp_path, 'run', str(CONFIGS / 'slab.toml'), *overrides) == 0
    frame = pd.read_csv(tmp_path / 'slab-ratio-map.csv')
    assert list(frame.columns) == ['rx', 'ry', 'vx', 'vy', 'ratio']
    assert len(frame) == 6
    reference = frame[(frame['rx'] == 0.0) & (frame['vx'] == 1.0)]
    assert reference['ratio'].iloc[0] == pytest.approx(1.0)
    assert _manifest(tmp_path, 'slab')['summary']['states'] == 6


def test_regime_of():
    assert regime_of(0.0) == 'critical'
    assert regime_of(0.2) == 'supercritical'
    assert regime_of(-0.4) == 'subcritical'


def test_malformed_region_exits_with_the_key(tmp_path):
    path = _write(tmp_path, TINY_SLAB.replace('region = 0', 'region = 7'))
    assert _run(tmp_path, 'run', str(path)) == 2
    manifest = _manifest(tmp_path, 'run')
    assert manifest['status'] == 'config-error'
    assert manifest['error']['key'] == 'materials[0].region'


def test_unknown_key_still_writes_a_manifest(tmp_path):
    path = _write(tmp_path, TINY_SLAB + 'colour = "red"\n', 'odd.toml')
    assert _run(tmp_path, 'run', str(path)) == 2
    manifest = _manifest(tmp_path, 'odd')
    assert manifest['error']['key'] == 'run.colour'
    assert manifest['outputs'] == []


def test_missing_seed_is_a_config_error(tmp_path):
    path = _write(tmp_path, TINY_SLAB.replace('seed = 5\n', ''))
    assert _run(tmp_path, 'run', str(path)) == 2


def test_validate_config(tmp_path):
    assert _run(tmp_path, 'validate-config', str(CONFIGS / 'fig-2d-hrw.toml')) == 0
    path = _write(tmp_path, TINY_SLAB.replace('sigma_f = 0.1', 'sigma_f = 0.0'))
    assert _run(tmp_path, 'validate-config', str(path)) == 2
    report = json.loads((tmp_path / 'run-validation.json').read_text())
    assert not report['valid']
    assert any('(H3)' in violation for violation in report['violations'])


def test_same_seed_gives_byte_identical_outputs(tmp_path):
    overrides = ['--set', 'run.t=[1.0, 2.0]', '--set', 'run.k=20', '--set', 'run.workers=1']
    first, second = tmp_path / 'first', tmp_path / 'second'
    assert _run(first, 'estimate-lambda', str(CONFIGS / 'slab.toml'), *overrides) == 0
    assert _run(second, 'estimate-lambda', str(CONFIGS / 'slab.toml'), *overrides) == 0
    assert (first / 'slab-lambda.csv').read_bytes() == (second / 'slab-lambda.csv').read_bytes()
    frame = pd.read_csv(first / 'slab-lambda.csv')
    assert list(frame['t']) == [1.0, 2.0]


def test_simulate_dumps_events(tmp_path):
    overrides = ['--set', 'run.mode="nrw"', '--set', 'run.t=2.0', '--set', 'run.k=3']
    assert _run(tmp_path, 'simulate', str(CONFIGS / 'slab.toml'), *overrides) == 0
    events = pd.read_csv(tmp_path / 'slab-events.csv')
    assert set(events['cycle']) == {0, 1, 2}


def test_extinct_estimate_exits_undefined(tmp_path):
    path = _write(tmp_path, TINY_SLAB)
    assert _run(tmp_path, 'run', str(path), '--set', 'run.workers=1') == 3
    assert _manifest(tmp_path, 'run')['status'] == 'undefined'
    frame = pd.read_csv(tmp_path / 'run-lambda.csv')
    assert frame['lambda_hat'].isna().all()


def test_dead_particle_filter_exits_with_extinction(tmp_path):
    path = _write(tmp_path, TINY_SLAB)
    overrides = ['--set', 'run.dynamics="nrw"', '--set', 'run.n_particles=3', '--set', 'run.delta=10.0',
                 '--set', 'run.t=20.0']
    assert _run(tmp_path, 'smc', str(path), *overrides) == 3
    assert _manifest(tmp_path, 'run')['status'] == 'extinction'
    assert (tmp_path / 'run-smc-trace.csv').exists()


def test_population_cap_exits_with_its_code(tmp_path):
    overrides = ['--set', 'run.mode="nbp"', '--set', 'run.t=30.0', '--set', 'run.k=20',
                 '--set', 'run.population_cap=5']
    path = _write(tmp_path, (CONFIGS / 'slab.toml').read_text().replace('sigma_f = 1.0', 'sigma_f = 1.2'))
    assert _run(tmp_path, 'simulate', str(path), *overrides) == 4
    assert _manifest(tmp_path, 'slab')['status'] == 'population-cap'
