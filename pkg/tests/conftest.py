import numpy as np
import pytest

from ogttsde import config


@pytest.fixture(scope="session")
def default_cfg():
    return config.load_default()


@pytest.fixture(scope="session")
def theta(default_cfg):
    return default_cfg.theta()


@pytest.fixture(scope="session")
def protocol(default_cfg):
    return default_cfg.protocol()


@pytest.fixture(scope="session")
def y0(default_cfg):
    return default_cfg.y0()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
