import numpy as np
import pytest

from modulation_lab.domain.grid import AxisGrid, SampledField
from modulation_lab.targets import GaussianSine1D, GaussianSine2D


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def target1d():
    return GaussianSine1D()


@pytest.fixture
def target2d():
    return GaussianSine2D()


@pytest.fixture
def sample_axis():
    return AxisGrid(start=-6.0, stop=6.0, num=241)


@pytest.fixture
def gaussian_field(sample_axis):
    return SampledField.from_function(
        lambda p: np.exp(-np.pi * p[:, 0] ** 2), [sample_axis]
    )


@pytest.fixture
def target_field(sample_axis, target1d):
    return SampledField.from_function(target1d, [sample_axis])
