import math

import numpy as np
import pytest

from fdbie.domains import circle, sphere, star
from fdbie.geometry import build_geometry


@pytest.fixture(scope="session")
def circle16():
    return build_geometry(circle(), 16)


@pytest.fixture(scope="session")
def circle32():
    return build_geometry(circle(), 32)


@pytest.fixture(scope="session")
def star32():
    return build_geometry(star(), 32)


@pytest.fixture(scope="session")
def degenerate16():
    # x^2 + y^2 = 1/2 passes through the grid node (0.5, 0.5) when h = 1/8
    return build_geometry(circle(math.sqrt(0.5)), 16)


@pytest.fixture(scope="session")
def sphere16():
    return build_geometry(sphere(), 16)


@pytest.fixture(params=["circle32", "star32", "degenerate16"])
def geom(request):
    return request.getfixturevalue(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
