import numpy as np
import pytest

from fisherdg.assembly import DensityState
from fisherdg.basis import BasisSpec
from fisherdg.mesh import MeshSpec, build_mesh
from fisherdg.operators import Discretization
from fisherdg.reference import get_problem


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def disc_1d():
    """Small 1D discretization: m=8, p=1."""
    return Discretization(build_mesh(MeshSpec(1, 8)), BasisSpec(1))


@pytest.fixture
def disc_1d_p3():
    return Discretization(build_mesh(MeshSpec(1, 6)), BasisSpec(3))


@pytest.fixture
def disc_2d():
    return Discretization(build_mesh(MeshSpec(2, 4)), BasisSpec(1))


@pytest.fixture
def ex1():
    return get_problem("ex1")


@pytest.fixture
def ex3():
    return get_problem("ex3")


@pytest.fixture
def ex6():
    return get_problem("ex6")


def positive_state(disc, rng, low=0.5, high=2.0) -> DensityState:
    vals = low + (high - low) * rng.random(disc.n_cells * disc.n_loc)
    return DensityState(disc, vals)
