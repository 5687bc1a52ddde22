import math

import numpy as np
import pandas as pd
import pytest

from neutron_transport.exceptions import ConfigError, PopulationCapError
from neutron_transport.geometry import Interval1D, TwoPoint1D
from neutron_transport.nbp import (FOREST_COLUMNS, NeutronBranchingModel, alive_at, births_before, population_at,
                                   simulate_nbp)
from neutron_transport.streams import cycle_seed_sequence
from neutron_transport.xsection import CrossSectionField, Material

START = [(np.array([0.0]), np.array([1.0]))]


def test_without_fission_the_forest_is_one_walk():
    field = CrossSectionField(Interval1D(1.0), TwoPoint1D(1.0), (Material(0.5, 0.0),))
    forest = simulate_nbp(field, START, 10.0, cycle_seed_sequence(1))
    assert len(forest) == 1
    assert forest.roots[0].generation == 0
    assert not forest.trajectories[0].fissioned


def test_same_seed_gives_identical_forests(critical_field):
    first = simulate_nbp(critical_field, START, 8.0, cycle_seed_sequence(3, 1)).frame()
    second = simulate_nbp(critical_field, START, 8.0, cycle_seed_sequence(3, 1)).frame()
    pd.testing.assert_frame_equal(first, second)


def test_children_start_where_and_when_the_parent_fissioned(supercritical_field):
    forest = simulate_nbp(supercritical_field, START, 6.0, cycle_seed_sequence(5))
    children = [traj for traj in forest.trajectories if traj.parent is not None]
    assert children
    for child in children:
        parent = forest.trajectories[child.parent]
        assert parent.fissioned
        assert child.birth_time == parent.path.t_end
        np.testing.assert_allclose(child.path.positions[0], parent.path.end_position)
        np.testing.assert_array_equal(child.path.velocities[0], parent.path.end_velocity)
        assert child.generation == parent.generation + 1


def test_population_cap_raises_with_a_partial_forest(supercritical_field):
    with pytest.raises(PopulationCapError) as error:
        simulate_nbp(supercritical_field, START * 20, 30.0, cycle_seed_sequence(7), population_cap=30)
    assert error.value.forest is not None
    assert not error.value.forest.valid


def test_mean_population_grows_at_the_mean_fission_excess():
    field = CrossSectionField(Interval1D(1000.0), TwoPoint1D(1.0), (Material(0.5, 0.5),))
    t = 2.0
    counts = np.array([population_at(simulate_nbp(field, START, t, cycle_seed_sequence(11, cycle)), t)
                       for cycle in range(600)])
    std_error = counts.std(ddof=1) / math.sqrt(len(counts))
    assert abs(counts.mean() - math.exp(0.5 * t)) < 4.0 * std_error


def test_alive_at_the_horizon_counts_truncated_neutrons():
    field = CrossSectionField(Interval1D(1.0), TwoPoint1D(0.01), (Material(0.1, 0.0),))
    forest = simulate_nbp(field, START, 2.0, cycle_seed_sequence(0))
    assert population_at(forest, 2.0) == 1
    r, v = alive_at(forest, 2.0)[0]
    assert abs(r[0]) <= 0.02


def test_births_before_includes_the_roots(supercritical_field):
    forest = simulate_nbp(supercritical_field, START, 4.0, cycle_seed_sequence(13))
    assert births_before(forest, 0.0) == forest.roots
    assert len(births_before(forest, 4.0)) == len(forest)


def test_forest_frame_lists_every_neutron(supercritical_field):
    forest = simulate_nbp(supercritical_field, START, 4.0, cycle_seed_sequence(17))
    frame = forest.frame(cycle=2)
    assert list(frame.columns) == FOREST_COLUMNS
    assert frame['particle'].nunique() == len(forest)
    assert (frame.loc[frame['event'] == 'birth', 'particle'].nunique()) == len(forest)


def test_model_collects_one_row_per_generation(supercritical_field):
    model = NeutronBranchingModel(supercritical_field, START, 3.0, cycle_seed_sequence(19))
    model.run_model()
    generations = model.datacollector.get_model_vars_dataframe()
    assert len(generations) == model.generation
    assert generations['Trajectories'].iloc[-1] == len(model.trajectories)


def test_empty_initial_configuration_is_rejected(critical_field):
    with pytest.raises(ConfigError):
        simulate_nbp(critical_field, [], 1.0)
