import numpy as np
import pytest

import gbass as g
from _oracles import lognormal_zgrid


def lognormal_measure(meanlog: float, sdlog: float, n: int = 2001,
                      zmax: float = 8.0) -> g.GridMeasure:
    atoms, weights = lognormal_zgrid(meanlog, sdlog, n, zmax)
    return g.make_grid_measure(atoms, weights)


@pytest.fixture(scope="session")
def gbm_pair():
    mu0 = g.make_grid_measure([1.0], [1.0])
    mu1 = lognormal_measure(-0.02, 0.2, 2001)
    return mu0, mu1


@pytest.fixture(scope="session")
def gbm_solution(gbm_pair):
    return g.solve_geometric(*gbm_pair)


@pytest.fixture(scope="session")
def step_pair():
    # two-point target with unit-mean source; the generating function is a
    # single step at the standard Gaussian median
    return g.make_grid_measure([1.0], [1.0]), g.make_grid_measure([0.0, 2.0], [0.5, 0.5])


@pytest.fixture(scope="session")
def step_solution(step_pair):
    return g.solve_component(*step_pair)


@pytest.fixture(scope="session")
def geometric_step_pair():
    return g.make_grid_measure([1.0], [1.0]), g.make_grid_measure([0.5, 1.5], [0.5, 0.5])


@pytest.fixture(scope="session")
def geometric_step_solution(geometric_step_pair):
    return g.solve_geometric(*geometric_step_pair)


@pytest.fixture(scope="session")
def two_component_pair():
    nu0 = g.make_grid_measure([1.0, 3.0], [0.5, 0.5])
    nu1 = g.make_grid_measure([0.5, 1.5, 2.5, 3.5], [0.25, 0.25, 0.25, 0.25])
    return nu0, nu1


def random_positive_measure(rng: np.random.Generator, max_atoms: int = 10) -> g.GridMeasure:
    n = int(rng.integers(1, max_atoms + 1))
    atoms = rng.uniform(0.1, 10.0, n)
    weights = rng.uniform(0.05, 1.0, n)
    return g.make_grid_measure(atoms, weights)


def dilate(mu: g.GridMeasure, rng: np.random.Generator,
           rel: float = 0.3) -> g.GridMeasure:
    """Mean-preserving spread of each atom into a symmetric pair."""
    d = rng.uniform(0.0, rel, mu.n) * mu.atoms
    atoms = np.concatenate([mu.atoms - d, mu.atoms + d])
    weights = np.concatenate([mu.weights / 2, mu.weights / 2])
    return g.make_grid_measure(atoms, weights)
