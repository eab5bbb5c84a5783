import numpy as np
import pytest

from sarscatter.imaging import xband_config


@pytest.fixture(scope="session")
def cfg88():
    return xband_config()


@pytest.fixture(scope="session")
def cfg128():
    return xband_config(padded=True)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
