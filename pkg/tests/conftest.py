import numpy as np
import pytest

from flatskin.model import ParamSet, builtin_flatband3

DEFAULT = ParamSet(-1.06, -0.3, 0.5, 0.32)
SETUP_I = ParamSet(-1.06, -0.3, 0.62, 0.32)
SETUP_II = ParamSet(-1.06, -0.3, 0.9, 0.32)
SETUP_III = ParamSet(-1.06, -0.3, 1.5, 0.66)
EP_PARAMS = ParamSet(-1.06, -0.3, 0.5, 1.0)


@pytest.fixture(scope="session")
def spec():
    return builtin_flatband3()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
