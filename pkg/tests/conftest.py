import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fracgeo import KernelParams, build_domain, build_kernel
from fracgeo.grid import Box

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def square_domain():
    """G = (-1, 1)^2 at h = 0.1 (400 cells)."""
    return build_domain(Box((-1, -1), (1, 1)), 0.1)


@pytest.fixture(scope="session")
def square_kernel(square_domain):
    return build_kernel(square_domain, KernelParams(0.5))


@pytest.fixture(scope="session")
def small_domain():
    """G = (0, 1)^2 at h = 1/8 (64 cells), cheap enough for exhaustive checks."""
    return build_domain(Box((0, 0), (1, 1)), 0.125)


@pytest.fixture(scope="session")
def small_kernel(small_domain):
    return build_kernel(small_domain, KernelParams(0.5))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
