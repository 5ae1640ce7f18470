import numpy as np
import pytest

from crowdcache.catalog import ContentCatalog
from crowdcache.experiments.config import default_config
from crowdcache.meanfield import MobilityModel
from crowdcache.user_model import UserParams, UserType

ACCEPTANCE_LINES = []


@pytest.fixture
def default_params():
    return UserParams(cache_cost_coefficient=0.1)


@pytest.fixture
def default_catalog():
    return ContentCatalog.uniform_sizes(10, skew=1.0)


@pytest.fixture
def default_population(default_params):
    return [UserType(default_params, 1000)]


@pytest.fixture
def mobility5():
    return MobilityModel.from_mean_neighbors(1000, 5.0)


@pytest.fixture(scope="session")
def shipped_config():
    return default_config()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
