import numpy as np
import pytest

from qcdol.analysis import convergence_sweep, theorem2_limit
from qcdol.pipeline import reference_trajectory
from qcdol.twoqubit import default_setup

DEFAULT_GRIDS = (64, 128, 256, 512, 1024, 2048, 4096)
DEFAULT_ORDERS = (1, 2, 3, 4, 5)


@pytest.fixture(scope="session")
def setup():
    return default_setup()


@pytest.fixture(scope="session")
def small_ref(setup):
    return reference_trajectory(setup.sys, setup.rho0, setup.T, 4096)


@pytest.fixture(scope="session")
def default_ref(setup):
    return reference_trajectory(setup.sys, setup.rho0, setup.T, 64 * max(DEFAULT_GRIDS))


@pytest.fixture(scope="session")
def default_records(setup, default_ref):
    return convergence_sweep(
        setup.sys, setup.rho0, setup.sigma0, setup.T, DEFAULT_ORDERS, DEFAULT_GRIDS, ref=default_ref
    )


@pytest.fixture(scope="session")
def default_limit(setup, default_ref):
    return theorem2_limit(default_ref, setup.sigma0, setup.sys, setup.T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
