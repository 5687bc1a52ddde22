import pytest

from neutron_transport.estimators import ConstantWeight
from neutron_transport.exceptions import ConfigError
from neutron_transport.htransform import slab_h1
from neutron_transport.run import (SWEEP_COLUMNS, WORKERS_ENV, EstimationSetup, LambdaEstimationModel,
                                   default_workers, lambda_sweep, run_estimator)


@pytest.fixture
def setup(critical_field):
    return EstimationSetup(critical_field, (0.0,), (1.0,), ConstantWeight(1.0))


def test_sweep_layout_and_order(setup):
    frame = lambda_sweep(setup, [2.0, 1.0], [10, 5], 'br', 7, iterations=2, number_processes=1)
    assert list(frame.columns) == SWEEP_COLUMNS
    assert len(frame) == 8
    ordered = frame.sort_values(['t', 'k', 'seed']).reset_index(drop=True)
    assert frame[['t', 'k', 'seed']].equals(ordered[['t', 'k', 'seed']])
    assert set(frame['seed']) == {7, 8}
    assert set(frame['estimator']) == {'br'}


def test_sweep_rows_match_direct_estimates(setup):
    frame = lambda_sweep(setup, [2.0], [15], 'rw', 3, number_processes=1)
    direct = run_estimator(setup, 'rw', 2.0, 15, 3)
    assert frame['value'].iloc[0] == direct.value
    assert frame['particles_created'].iloc[0] == 15


def test_model_runs_one_estimate(setup):
    model = LambdaEstimationModel(setup, 3.0, 10, 'br', 21)
    model.step()
    assert not model.running
    assert model.result.k == 10
    assert len(model.datacollector.get_model_vars_dataframe()) == 1


def test_h_walk_needs_an_h(setup, critical_slab):
    with pytest.raises(ConfigError) as error:
        run_estimator(setup, 'hrw', 1.0, 5, 1)
    assert error.value.key == 'h.variant'
    with_h = EstimationSetup(setup.field, setup.r, setup.v, setup.weight,
                             slab_h1(setup.field.domain, critical_slab.v0, critical_slab.sigma_s))
    with pytest.raises(ConfigError):
        run_estimator(with_h, 'hrw', 1.0, 5, 1)


def test_bad_sweep_arguments(setup):
    with pytest.raises(ConfigError) as error:
        lambda_sweep(setup, [1.0], [5], 'mc', 1)
    assert error.value.key == 'run.mode'
    with pytest.raises(ConfigError) as error:
        lambda_sweep(setup, [1.0], [5], 'br', 1, iterations=0)
    assert error.value.key == 'run.iterations'


def test_default_workers(monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    assert default_workers() == 1
    monkeypatch.setenv(WORKERS_ENV, '3')
    assert default_workers() == 3
    for raw in ('many', '0'):
        monkeypatch.setenv(WORKERS_ENV, raw)
        with pytest.raises(ConfigError) as error:
            default_workers()
        assert error.value.key == WORKERS_ENV
