import numpy as np
import pytest

from cogharq.centralized import build_model
from cogharq.config import ScenarioConfig


@pytest.fixture(scope="session")
def cfg2():
    """Two-SU default scenario with a reduced sample count for quick table builds."""
    return ScenarioConfig.defaults(2, mc_samples=40_000)


@pytest.fixture(scope="session")
def model2(cfg2):
    return build_model(cfg2)


@pytest.fixture(scope="session")
def dec_model2(cfg2):
    return build_model(cfg2, "decentralized")


@pytest.fixture(scope="session")
def cfg1():
    return ScenarioConfig.defaults(1, mc_samples=40_000)


@pytest.fixture(scope="session")
def model1(cfg1):
    return build_model(cfg1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
