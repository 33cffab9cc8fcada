from __future__ import annotations

import pytest
from hypothesis import settings

from u2mfql.core import ActionGrid, StateGrid
from u2mfql.envs import LQParams

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def params():
    return LQParams()


@pytest.fixture
def grid():
    return StateGrid(0.5, 2.0, 0.1)


@pytest.fixture
def agrid():
    return ActionGrid(-1.0, 1.0, 0.1)
