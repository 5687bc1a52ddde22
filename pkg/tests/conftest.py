import numpy as np
import pytest

from neutron_transport.geometry import Circle, FixedSpeed2D, Rect2D
from neutron_transport.slab1d import SlabConfig, eigen, to_field
from neutron_transport.xsection import CrossSectionField, Material

ROD_CENTERS = ((-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5))


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow statistical tests')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def critical_slab():
    return SlabConfig(halfwidth=1.0, v0=1.0, sigma_s=0.5, sigma_f=1.0)


@pytest.fixture
def supercritical_slab():
    return SlabConfig(halfwidth=1.0, v0=1.0, sigma_s=0.5, sigma_f=1.2)


@pytest.fixture
def subcritical_slab():
    return SlabConfig(halfwidth=1.0, v0=1.0, sigma_s=0.5, sigma_f=0.6)


@pytest.fixture
def critical_field(critical_slab):
    return to_field(critical_slab)


@pytest.fixture
def supercritical_field(supercritical_slab):
    return to_field(supercritical_slab)


@pytest.fixture
def subcritical_field(subcritical_slab):
    return to_field(subcritical_slab)


@pytest.fixture
def critical_eigen(critical_slab):
    return eigen(critical_slab)


@pytest.fixture
def four_rod_domain():
    return Rect2D(1.0, 1.0, tuple(Circle(center, 0.2) for center in ROD_CENTERS))


@pytest.fixture
def four_rod_field(four_rod_domain):
    background = Material(sigma_s=1.0, sigma_f=0.05)
    rod = Material(sigma_s=0.5, sigma_f=2.0)
    return CrossSectionField(four_rod_domain, FixedSpeed2D(1.0), (background,) + (rod,) * len(ROD_CENTERS),
                             n_angle=32)


@pytest.fixture
def origin_right():
    return np.array([0.0]), np.array([1.0])
