import numpy as np
import pytest

from resdiff import build_schedule


@pytest.fixture(scope="session")
def ramp_schedule():
    """Default schedule: linear-ramp, T=1, delta_T=1, beta_T=1."""
    return build_schedule()


@pytest.fixture(scope="session")
def uniform_schedule():
    return build_schedule(family="uniform")


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
