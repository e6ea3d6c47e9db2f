import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import repmut

settings.register_profile(
    "default",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def system1():
    return repmut.preset("system1")


@pytest.fixture(scope="session")
def system2():
    return repmut.preset("system2")


@pytest.fixture(scope="session")
def figure1():
    return repmut.preset("figure1")


@pytest.fixture(scope="session")
def system1_b0(system1):
    """System 1 with the bias removed (perfect-model regime)."""
    return system1.with_updates(b=np.zeros(1))


@pytest.fixture(scope="session")
def system2_b0(system2):
    return system2.with_updates(b=np.zeros(1))
