import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rovo.fisheye import FisheyeIntrinsics
from rovo.rig import default_rig

settings.register_profile("rovo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("rovo")


@pytest.fixture(scope="session")
def rig():
    return default_rig()


@pytest.fixture(scope="session")
def phi():
    return FisheyeIntrinsics.default()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_rotvec(rng, n, max_angle=math.pi):
    axis = random_unit(rng, n)
    return axis * rng.uniform(0.0, max_angle, n)[:, None]
