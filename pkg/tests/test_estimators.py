import math

import numpy as np
import pytest

from neutron_transport.estimators import (BoxIndicator, ConstantWeight, EstimatorResult, OccupationBins, PhiWeight,
                                          eigenfunction_ratio, lambda_curve, lambda_estimate, left_inner,
                                          left_inner_single, martingale_diag, occupation_histogram, psi_br,
                                          psi_br_curve, psi_hrw, psi_hrw_product, psi_rw, ratio_map,
                                          reduce_log_weights, second_moment_rate)
from neutron_transport.exceptions import ConfigError, DomainError
from neutron_transport.htransform import ConstantH, EigenH, simulate_hnrw, slab_h1
from neutron_transport.nrw import simulate_nrw
from neutron_transport.streams import cycle_generator

ONE = ConstantWeight(1.0)
CENTRAL_BOX = BoxIndicator((-0.9,), (0.9,))


def _agree(first: EstimatorResult, second: EstimatorResult, n_se: float = 4.0) -> bool:
    return abs(first.value - second.value) <= n_se * math.hypot(first.std_error, second.std_error)


def test_reduce_log_weights_matches_the_plain_mean():
    weights = np.array([0.5, 2.0, 0.0, 1.5])
    with np.errstate(divide='ignore'):
        result = reduce_log_weights(np.log(weights), 1.0)
    assert result.value == pytest.approx(1.0)
    assert result.std_error == pytest.approx(np.std(weights, ddof=1) / 2.0)
    assert result.survivors == 3


def test_reduce_log_weights_stays_in_log_space():
    result = reduce_log_weights(np.array([1000.0, 1000.0 + math.log(3.0)]), 10.0)
    assert result.log_value == pytest.approx(1000.0 + math.log(2.0))
    assert lambda_estimate(result).value == pytest.approx(100.0 + math.log(2.0) / 10.0)


def test_extinct_estimate_has_undefined_lambda():
    result = reduce_log_weights(np.full(5, -math.inf), 3.0)
    assert result.value == 0.0
    estimate = lambda_estimate(result)
    assert not estimate.defined
    assert estimate.value is None and estimate.std_error is None


def test_estimators_at_time_zero_return_g(critical_field):
    box = BoxIndicator((-0.5,), (0.5,))
    assert psi_br(critical_field, box, 0.0, [0.0], [1.0], 3, 1).value == pytest.approx(1.0)
    assert psi_rw(critical_field, box, 0.0, [0.25], [-1.0], 3, 1).value == pytest.approx(1.0)
    assert psi_br(critical_field, box, 0.0, [0.75], [1.0], 3, 1).value == 0.0


def test_estimators_reject_bad_inputs(critical_field):
    with pytest.raises(DomainError):
        psi_br(critical_field, ONE, 1.0, [1.0], [1.0], 10, 1)
    with pytest.raises(ConfigError):
        psi_rw(critical_field, ONE, 1.0, [0.0], [1.0], 0, 1)
    with pytest.raises(ConfigError):
        psi_rw(critical_field, ONE, -1.0, [0.0], [1.0], 10, 1)
    with pytest.raises(ConfigError):
        psi_rw(critical_field, ONE, 1.0, [0.0], [0.5], 10, 1)


def test_same_seed_gives_identical_estimates(critical_field):
    first = psi_br(critical_field, ONE, 3.0, [0.0], [1.0], 30, 42)
    second = psi_br(critical_field, ONE, 3.0, [0.0], [1.0], 30, 42)
    assert first.value == second.value
    np.testing.assert_array_equal(first.samples, second.samples)


def test_constant_h_walk_reproduces_the_plain_walk(critical_field):
    h = ConstantH(2.0)
    plain = psi_rw(critical_field, ONE, 4.0, [0.0], [1.0], 40, 8)
    transformed = psi_hrw(critical_field, h, ONE, 4.0, [0.0], [1.0], 40, 8)
    np.testing.assert_array_equal(plain.samples, transformed.samples)
    for cycle in range(5):
        walk = simulate_nrw(critical_field, [0.0], [1.0], 0.0, 4.0, cycle_generator(3, cycle))
        h_walk = simulate_hnrw(critical_field, h, [0.0], [1.0], 4.0, cycle_generator(3, cycle))
        np.testing.assert_array_equal(walk.times, h_walk.times)
        np.testing.assert_array_equal(walk.velocities, h_walk.velocities)


def test_branching_and_walk_estimators_agree(subcritical_field):
    branching = psi_br(subcritical_field, ONE, 2.0, [0.0], [1.0], 2000, 5)
    walk = psi_rw(subcritical_field, ONE, 2.0, [0.0], [1.0], 2000, 6)
    assert _agree(branching, walk)


def test_h_walk_needs_g_to_vanish_where_h_does(critical_field, critical_slab):
    h = slab_h1(critical_field.domain, critical_slab.v0, critical_slab.sigma_s)
    with pytest.raises(ConfigError) as error:
        psi_hrw(critical_field, h, ONE, 1.0, [0.0], [1.0], 5, 1)
    assert error.value.key == 'h.variant'


def test_eigenfunction_as_h_gives_zero_variance(critical_field, critical_eigen):
    result = psi_hrw(critical_field, EigenH(critical_eigen), PhiWeight(critical_eigen), 3.0, [0.0], [1.0], 20, 4)
    assert result.survivors == 20
    assert np.std(result.samples) < 1e-10 * result.value
    assert result.value == pytest.approx(critical_eigen.phi(0.0, 1.0), rel=1e-8)


def test_product_form_matches_the_integral_form(critical_field, critical_slab):
    h = slab_h1(critical_field.domain, critical_slab.v0, critical_slab.sigma_s)
    integral = psi_hrw(critical_field, h, CENTRAL_BOX, 2.0, [0.0], [1.0], 30, 9)
    product = psi_hrw_product(critical_field, h, CENTRAL_BOX, 2.0, [0.0], [1.0], 30, 9)
    np.testing.assert_allclose(product.samples, integral.samples, rtol=1e-6)


def test_curve_shares_forests_across_times(critical_field):
    curve = psi_br_curve(critical_field, ONE, [1.0, 2.0], [0.0], [1.0], 25, 13)
    single = psi_br(critical_field, ONE, 2.0, [0.0], [1.0], 25, 13)
    assert curve[1].value == single.value
    frame = lambda_curve(curve)
    assert list(frame['t']) == [1.0, 2.0]


def test_left_inner_of_one_is_one(critical_field):
    assert left_inner(critical_field, ONE, 2.0, [0.0], [1.0], 20, 3) == pytest.approx(1.0)
    value = left_inner_single(critical_field, CENTRAL_BOX, 1.0, [0.0], [1.0], 3)
    assert value is None or 0.0 <= value <= 1.0


def test_occupation_histogram_totals_the_population(critical_field):
    bins = OccupationBins(critical_field.domain, nx=10, n_sectors=2)
    histogram = occupation_histogram(critical_field, bins, 2.0, 4, 30, 17, [0.0], [1.0])
    curve = psi_br_curve(critical_field, ONE, [0.5, 1.0, 1.5, 2.0], [0.0], [1.0], 30, 17)
    assert histogram.values.shape == (10, 1, 2)
    assert histogram.values.sum() == pytest.approx(np.mean([result.value for result in curve]))
    assert histogram.position_marginal().shape == (10,)


def test_occupation_bins_index():
    from neutron_transport.geometry import Rect2D
    bins = OccupationBins(Rect2D(1.0, 1.0), nx=4, ny=2, n_sectors=4)
    assert bins.index(np.array([-0.9, 0.5]), np.array([0.0, 1.0])) == (0, 1, 1)
    assert bins.index(np.array([0.99, -0.5]), np.array([1.0, -0.01])) == (3, 0, 3)


def test_martingale_starts_at_one_and_keeps_its_mean(critical_field, critical_eigen):
    points = martingale_diag(critical_field, PhiWeight(critical_eigen), 0.0, [0.0, 1.0, 3.0], [0.0], [1.0], 800, 31)
    assert points[0].mean == 1.0
    for point in points[1:]:
        assert abs(point.mean - 1.0) < 4.0 * point.std_error


def test_second_moment_fit_needs_two_times(subcritical_field):
    with pytest.raises(ConfigError):
        second_moment_rate(subcritical_field, ONE, [1.0], [0.0], [1.0], 10, 1)


@pytest.mark.slow
def test_unbiasedness_triangle(subcritical_field, subcritical_slab):
    h = slab_h1(subcritical_field.domain, subcritical_slab.v0, subcritical_slab.sigma_s)
    branching = psi_br(subcritical_field, CENTRAL_BOX, 5.0, [0.0], [1.0], 10_000, 101)
    walk = psi_rw(subcritical_field, CENTRAL_BOX, 5.0, [0.0], [1.0], 10_000, 102)
    h_walk = psi_hrw(subcritical_field, h, CENTRAL_BOX, 5.0, [0.0], [1.0], 10_000, 103)
    assert _agree(branching, walk, 3.0)
    assert _agree(branching, h_walk, 3.0)
    assert _agree(walk, h_walk, 3.0)


@pytest.mark.slow
def test_critical_eigenvalue_recovery(critical_field):
    estimate = lambda_estimate(psi_br(critical_field, ONE, 40.0, [0.0], [1.0], 2000, 7))
    assert estimate.defined
    assert abs(estimate.value) <= 0.05


@pytest.mark.slow
def test_supercritical_eigenvalue_recovery(supercritical_field):
    result = psi_br(supercritical_field, ONE, 40.0, [0.0], [1.0], 500, 19, population_cap=50_000_000)
    assert lambda_estimate(result).value == pytest.approx(0.2, abs=0.05)


@pytest.mark.slow
def test_martingale_suite(critical_field, critical_eigen):
    points = martingale_diag(critical_field, PhiWeight(critical_eigen), 0.0, [5.0, 10.0, 20.0, 40.0],
                             [0.0], [1.0], 5000, 37)
    for point in points:
        assert abs(point.mean - 1.0) <= 3.0 * point.std_error


@pytest.mark.slow
def test_second_moment_sandwich(subcritical_field, subcritical_slab):
    from neutron_transport.slab1d import eigen
    lam = eigen(subcritical_slab).lambda_star
    rate = second_moment_rate(subcritical_field, ONE, [1.0, 2.0, 3.0, 4.0], [0.0], [1.0], 20_000, 41,
                              lambda_star=lam)
    assert rate.within_bounds


def test_ratio_map_layout(critical_field):
    states = [(np.array([x]), np.array([u])) for x in (-0.5, 0.0, 0.5) for u in (-1.0, 1.0)]
    frame = ratio_map(critical_field, ONE, 2.0, states, ([0.0], [1.0]), 200, 44)
    assert list(frame.columns) == ['rx', 'ry', 'vx', 'vy', 'ratio']
    assert len(frame) == 6
    assert list(frame['rx']) == [-0.5, -0.5, 0.0, 0.0, 0.5, 0.5]
    reference = frame[(frame['rx'] == 0.0) & (frame['vx'] == 1.0)]
    assert reference['ratio'].iloc[0] == pytest.approx(1.0)
    assert (frame['ry'] == 0.0).all()


@pytest.mark.slow
def test_ratio_map_follows_phi(critical_field, critical_eigen):
    positions = (-0.6, -0.3, 0.0, 0.3, 0.6)
    states = [(np.array([x]), np.array([1.0])) for x in positions]
    frame = ratio_map(critical_field, ONE, 20.0, states, ([0.0], [1.0]), 3000, 45)
    expected = [critical_eigen.phi(x, 1.0) / critical_eigen.phi(0.0, 1.0) for x in positions]
    assert np.allclose(frame['ratio'], expected, atol=0.2)
    assert np.corrcoef(frame['ratio'], expected)[0, 1] > 0.9


@pytest.mark.slow
def test_eigenfunction_ratio_tracks_phi(critical_field, critical_eigen):
    estimate = eigenfunction_ratio(critical_field, ONE, 20.0, ([0.5], [1.0]), ([0.0], [1.0]), 3000, 43)
    assert estimate.defined
    assert estimate.value == pytest.approx(critical_eigen.phi(0.5, 1.0) / critical_eigen.phi(0.0, 1.0), abs=0.15)


@pytest.mark.slow
def test_heat_map_follows_the_left_eigenfunction(critical_field, critical_eigen):
    bins = OccupationBins(critical_field.domain, nx=40)
    histogram = occupation_histogram(critical_field, bins, 40.0, 100, 2000, 47, [0.0], [1.0])
    centers, _ = bins.centers()
    profile = [critical_eigen.phi_tilde(x, 1.0) + critical_eigen.phi_tilde(x, -1.0) for x in centers]
    assert np.corrcoef(histogram.position_marginal(), profile)[0, 1] > 0.95
