import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tcfou import FouParams, InverseSubordinatorKernel, SubordinatorModel

settings.register_profile(
    "default", deadline=None, max_examples=30,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture(scope="session")
def params():
    return FouParams(0.75, 1.0)


@pytest.fixture(scope="session")
def stable07():
    return SubordinatorModel.stable(0.7)


@pytest.fixture(scope="session")
def kernel07(stable07):
    return InverseSubordinatorKernel(stable07)


CATALOG = [
    SubordinatorModel.stable(0.5),
    SubordinatorModel.stable(0.7),
    SubordinatorModel.tempered(0.7, 1.5),
    SubordinatorModel.gamma(1.0, 1.0),
]


def rel(a, b):
    return np.abs(np.asarray(a) - np.asarray(b)) / np.abs(np.asarray(b))
