import numpy as np
import pytest

from lowrank_newton.newton import NewtonConfig, newton_solve
from lowrank_newton.partition import split
from lowrank_newton.problem import ModelConfig, build_problem

DEFAULT = ModelConfig()


@pytest.fixture(scope="session")
def default_problem():
    return build_problem(DEFAULT)


@pytest.fixture(scope="session")
def default_params():
    return DEFAULT.parameters()


@pytest.fixture(scope="session")
def default_partition(default_params):
    return split(default_params, 8)


@pytest.fixture(scope="session")
def default_medians(default_problem, default_partition):
    """Median Newton solutions at the default accuracy 1e-4, one per subset."""
    return [
        newton_solve(default_problem, default_partition.median_value(k), NewtonConfig(1e-4)).x
        for k in range(default_partition.K)
    ]


@pytest.fixture(scope="session")
def small_cfg():
    return ModelConfig(nf=20, ns=20, num_params=12)


@pytest.fixture(scope="session")
def small_problem(small_cfg):
    return build_problem(small_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
