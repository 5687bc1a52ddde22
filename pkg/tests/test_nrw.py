import numpy as np
import pytest

from scipy import stats

from neutron_transport.exceptions import ConfigError, DomainError, OutOfLifeError, RateBoundError
from neutron_transport.geometry import Interval1D, TwoPoint1D
from neutron_transport.nrw import (EVENT_COLUMNS, PlainRates, ScatterRates, beta_integral, integrate_along,
                                   next_event, sample_scatter_time, simulate_nrw, trajectory_at)
from neutron_transport.streams import cycle_generator
from neutron_transport.xsection import CrossSectionField, Material


def _wide_field(*materials, splits=()):
    return CrossSectionField(Interval1D(50.0, splits), TwoPoint1D(1.0), tuple(materials))


def test_homogeneous_scatter_time_is_exponential():
    field = _wide_field(Material(sigma_s=0.5, sigma_f=1.0))
    rng = cycle_generator(1)
    times = [sample_scatter_time(PlainRates(field), [0.0], [1.0], rng) for _ in range(2000)]
    assert stats.kstest(times, stats.expon(scale=1.0 / 2.5).cdf).pvalue > 0.01


def test_piecewise_rate_integrates_the_hazard():
    field = _wide_field(Material(1.0, 0.0), Material(3.0, 0.0), splits=(0.0,))
    rng = cycle_generator(2)
    times = np.array([sample_scatter_time(ScatterRates(field), [-5.0], [1.0], rng) for _ in range(2000)])
    hazard = np.where(times < 5.0, times, 5.0 + 3.0 * (times - 5.0))
    assert stats.kstest(1.0 - np.exp(-hazard), 'uniform').pvalue > 0.01


class UnderBoundedRates(PlainRates):
    '''
    Declares half the true rate as its thinning bound.
    '''

    def bound(self, region, r, v, s_a, s_b):
        return s_b, 0.5 * self.field.materials[region].alpha


def test_rate_above_its_thinning_bound_is_an_error():
    field = _wide_field(Material(sigma_s=0.5, sigma_f=1.0))
    with pytest.raises(RateBoundError):
        next_event(UnderBoundedRates(field), np.array([0.0]), np.array([1.0]), cycle_generator(4), 40.0)
    s, region = next_event(PlainRates(field), np.array([0.0]), np.array([1.0]), cycle_generator(4), 40.0)
    assert 0.0 < s < 40.0 and region == 0


def test_no_jump_before_exit_gives_infinity():
    field = _wide_field(Material(0.0, 0.0))
    assert sample_scatter_time(PlainRates(field), [0.0], [1.0], cycle_generator(3)) == np.inf


def test_same_seed_gives_identical_path(critical_field):
    first = simulate_nrw(critical_field, [0.0], [1.0], 0.0, 20.0, cycle_generator(7, 3))
    second = simulate_nrw(critical_field, [0.0], [1.0], 0.0, 20.0, cycle_generator(7, 3))
    np.testing.assert_array_equal(first.times, second.times)
    np.testing.assert_array_equal(first.velocities, second.velocities)
    assert first.t_end == second.t_end


def test_walk_without_scatter_exits_at_the_boundary():
    field = CrossSectionField(Interval1D(1.0), TwoPoint1D(2.0), (Material(0.0, 0.0),))
    path = simulate_nrw(field, [0.0], [2.0], 0.0, 10.0, cycle_generator(0))
    assert path.exited
    assert path.n_scatters == 0
    assert path.t_end == pytest.approx(0.5)
    assert path.end_position[0] == pytest.approx(1.0)


def test_horizon_truncates_a_walk():
    field = CrossSectionField(Interval1D(1.0), TwoPoint1D(0.01), (Material(1.0, 0.0),))
    path = simulate_nrw(field, [0.0], [0.01], 0.0, 3.0, cycle_generator(4))
    assert not path.exited
    assert path.t_end == 3.0
    assert np.all(np.abs(path.positions[:, 0]) < 1.0)


def test_walk_state_queries(critical_field):
    path = simulate_nrw(critical_field, [0.0], [1.0], 0.0, 5.0, cycle_generator(9))
    r, v = trajectory_at(path, 0.0)
    assert r[0] == 0.0 and v[0] == 1.0
    with pytest.raises(OutOfLifeError):
        trajectory_at(path, path.t_end + 1.0)


def test_velocities_stay_in_the_velocity_space(critical_field):
    for cycle in range(20):
        path = simulate_nrw(critical_field, [0.3], [-1.0], 0.0, 10.0, cycle_generator(11, cycle))
        assert set(np.abs(path.velocities[:, 0])) == {1.0}
        assert all(critical_field.domain.contains(r) for r in path.positions)


def test_beta_integral_of_a_homogeneous_slab_is_beta_times_life(critical_field):
    path = simulate_nrw(critical_field, [0.0], [1.0], 0.0, 5.0, cycle_generator(12))
    assert beta_integral(path, critical_field, path.t_end) == pytest.approx(1.0 * path.t_end)
    assert integrate_along(path, critical_field, lambda r, v, region: 1.0, path.t_end) == pytest.approx(path.t_end)
    with pytest.raises(OutOfLifeError):
        beta_integral(path, critical_field, path.t_end + 1.0)


def test_beta_integral_splits_at_material_interfaces():
    field = CrossSectionField(Interval1D(1.0, (0.0,)), TwoPoint1D(1.0), (Material(0.0, 1.0), Material(0.0, 0.5)))
    path = simulate_nrw(field, [-0.5], [1.0], 0.0, 10.0, cycle_generator(0), rates=ScatterRates(field))
    # no scatter: flight from -0.5 to 1.0 through beta = 1 then beta = 0.5
    assert path.t_end == pytest.approx(1.5)
    assert beta_integral(path, field, path.t_end) == pytest.approx(0.5 * 1.0 + 1.0 * 0.5)


def test_events_frame_ends_with_the_terminal_event(critical_field):
    path = simulate_nrw(critical_field, [0.0], [1.0], 0.0, 5.0, cycle_generator(13))
    frame = path.events_frame(cycle=4)
    assert list(frame.columns) == EVENT_COLUMNS
    assert frame['event'].iloc[0] == 'start'
    assert frame['event'].iloc[-1] == ('exit' if path.exited else 'horizon')
    assert len(frame) == path.n_scatters + 2
    assert set(frame['cycle']) == {4}


def test_invalid_starts(critical_field):
    with pytest.raises(DomainError):
        simulate_nrw(critical_field, [1.0], [1.0], 0.0, 5.0, cycle_generator(0))
    with pytest.raises(ConfigError):
        simulate_nrw(critical_field, [0.0], [1.0], 5.0, 5.0, cycle_generator(0))
