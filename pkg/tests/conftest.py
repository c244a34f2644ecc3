import random

import pytest

from world import World


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def world():
    return World(seed=7)
