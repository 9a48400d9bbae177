from __future__ import annotations

import random

import pytest

from contactloc.geometry import Geometry, GridWorkspace, ProbeShape
from contactloc.particles import ObjectTemplate

L_ROTATIONS = (
    ((0, 0), (1, 0), (0, 1)),
    ((0, 0), (1, 0), (1, 1)),
    ((1, 0), (0, 1), (1, 1)),
    ((0, 0), (0, 1), (1, 1)),
)
L_DOCKS = ((1, 1), (0, 1), (0, 0), (1, 0))


@pytest.fixture
def grid10():
    return GridWorkspace((10, 10))


@pytest.fixture
def geom10(grid10):
    return Geometry(grid10, ProbeShape.single(2))


@pytest.fixture
def l_template():
    return ObjectTemplate(L_ROTATIONS, L_DOCKS)


@pytest.fixture
def rng():
    return random.Random(20260810)
