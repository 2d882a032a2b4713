import pytest

from utils.measures import GaussianMixture, UniformBox, point_mass, standard_normal


@pytest.fixture
def normal_1d():
    return standard_normal(1)


@pytest.fixture
def normal_2d():
    return standard_normal(2)


@pytest.fixture
def delta_1d():
    return point_mass([0.0])


@pytest.fixture
def unit_box_1d():
    return UniformBox(dim=1, lower=[0.0], upper=[1.0])


@pytest.fixture
def two_bumps():
    return GaussianMixture(dim=1, weights=[0.3, 0.7], means=[[-1.0], [2.0]], variances=[0.5, 1.5])
