import numpy as np
import pytest

from transferlab.catalog import nspace_for
from transferlab.lattice import MetricSpec, build_lattice

FLAT = MetricSpec("flat")
SLOPE1 = MetricSpec("curve-induced", {"slope": 1.0})


@pytest.fixture(scope="session")
def lat17():
    return build_lattice([17, 17], [0.5, 0.5], [-4.0, -4.0])


@pytest.fixture(scope="session")
def flat17(lat17):
    return nspace_for(lat17, FLAT, 1.0)


@pytest.fixture(scope="session")
def slope17(lat17):
    return nspace_for(lat17, SLOPE1, 1.0)


@pytest.fixture(scope="session", params=["flat", "slope1"])
def space17(request, flat17, slope17):
    return flat17 if request.param == "flat" else slope17


@pytest.fixture(scope="session")
def tiny():
    """6x5 lattice with an x-dependent diagonal metric, small enough for dense oracles."""
    lat = build_lattice([6, 5], [0.5, 0.4], [0.0, 0.0])
    prof = 1.0 + 0.3 * np.linspace(0, 1, 5) ** 2
    return nspace_for(lat, MetricSpec("diagonal-stationary", {"diag": [prof, 1.0 / prof]}), 0.8)


def dense_stiffness_1d(n, h):
    """Q1 stiffness and consistent mass on n interior nodes with Dirichlet ghosts."""
    K = (2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)) / h
    M = (4 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1)) * h / 6
    return K, M


def random_vector(n, seed=0):
    return np.random.default_rng(seed).standard_normal(n)
