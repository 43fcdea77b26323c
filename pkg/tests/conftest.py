import functools
import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from adjoint_mather import (  # noqa: E402
    CellProblemSpec,
    PotentialSpec,
    TorusGrid,
    make_mechanical,
    solve_cell,
    stationary_adjoint,
)

settings.register_profile("default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def pendulum(amplitude=1.0):
    return make_mechanical(PotentialSpec("cosine", [amplitude]))


@functools.lru_cache(maxsize=None)
def pendulum_solution(P=2.0, eps=0.1, N=256):
    return solve_cell(CellProblemSpec(pendulum(), (P,), eps, TorusGrid((N,))))


@functools.lru_cache(maxsize=None)
def pendulum_density(P=2.0, eps=0.1, N=256):
    return stationary_adjoint(pendulum_solution(P, eps, N))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
