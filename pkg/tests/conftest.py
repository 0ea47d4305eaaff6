import numpy as np
import pytest

from tvmix import CauchyParams, GaussianParams, MixtureParams


@pytest.fixture
def std_mixture():
    """Standard-normal / standard-Cauchy half-and-half mixture."""
    return MixtureParams(GaussianParams(0.0, 1.0), CauchyParams(0.0, 1.0), 0.5)


@pytest.fixture
def table1_truth():
    """The n=100, alpha=0.9 simulation truth."""
    return MixtureParams(GaussianParams(0.0, 1.0), CauchyParams(0.0, 1.0), 0.9)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
