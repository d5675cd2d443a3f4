import numpy as np
import pytest

from gridflex import fixtures
from gridflex.markets import EngineOptions
from gridflex.mip import SolverOptions


@pytest.fixture
def small_world():
    return fixtures.tso_dso_small(h=2)


@pytest.fixture
def engine_opts():
    return EngineOptions()


def solver_opts(**kw):
    return SolverOptions(**kw)
