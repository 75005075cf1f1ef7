"""Shared synthetic environments for the test suite.

Everything here is small enough to build in a few seconds; the expensive
shared artifacts are session-scoped so the cost is paid once.
"""

import numpy as np
import pytest

from ibpa.core import (
    AuctionEnvironment, CtrModel, InventoryDistribution, Partition, Regime,
    ValuationPrior,
)
from ibpa.mechanism import build_ibpa_artifacts
from ibpa.solver import SolverConfig


def make_two_type_env(n_slots: int = 1) -> AuctionEnvironment:
    """3 advertisers, 2 types, comonotone finite priors."""
    p = np.array([0.4, 0.6])
    beta = np.array([1.0, 0.8])
    alpha = np.array([1.0, 0.5])[:n_slots]
    gammas = np.array([1.0, 0.9, 0.8])
    f1 = ValuationPrior(
        np.array([[0.2, 0.1], [0.5, 0.3], [0.7, 0.6], [1.0, 0.9]]),
        np.array([0.3, 0.3, 0.2, 0.2]))
    f2 = ValuationPrior(
        np.array([[0.4, 0.2], [0.8, 0.5], [0.9, 1.0]]),
        np.array([0.5, 0.3, 0.2]))
    f3 = ValuationPrior(np.array([[0.3, 0.4], [0.6, 0.8]]),
                        np.array([0.6, 0.4]))
    return AuctionEnvironment(InventoryDistribution(p),
                              CtrModel(alpha, beta, gammas), (f1, f2, f3))


def make_single_type_env(n_atoms: int = 40) -> AuctionEnvironment:
    """2 symmetric advertisers, 1 type, Uniform[0,1] lattice priors."""
    grid = (np.arange(n_atoms) + 0.5) / n_atoms
    prior = ValuationPrior(grid[:, None], np.full(n_atoms, 1.0 / n_atoms))
    return AuctionEnvironment(
        InventoryDistribution(np.array([1.0])),
        CtrModel(np.array([1.0]), np.array([1.0]), np.array([1.0, 1.0])),
        (prior, prior))


def random_env(rng, n_types=None, n_advertisers=None, n_slots=None,
               n_atoms=None) -> AuctionEnvironment:
    """Random small environment for property tests."""
    T = n_types if n_types is not None else int(rng.integers(2, 5))
    A = n_advertisers if n_advertisers is not None else int(rng.integers(2, 5))
    S = n_slots if n_slots is not None else int(rng.integers(1, 4))
    M = n_atoms if n_atoms is not None else int(rng.integers(2, 6))
    p = rng.dirichlet(np.full(T, 2.0))
    beta = np.concatenate([[1.0], rng.uniform(0.4, 1.0, T - 1)])
    alpha = np.concatenate([[1.0], np.sort(rng.uniform(0.1, 0.9, S - 1))[::-1]])
    gammas = rng.uniform(0.5, 1.0, A)
    priors = tuple(
        ValuationPrior(rng.uniform(0.0, 1.0, size=(M, T)),
                       rng.dirichlet(np.full(M, 2.0)))
        for _ in range(A))
    return AuctionEnvironment(InventoryDistribution(p),
                              CtrModel(alpha, beta, gammas), priors)


@pytest.fixture(scope="session")
def two_type_env():
    return make_two_type_env()


@pytest.fixture(scope="session")
def two_type_artifacts(two_type_env):
    """Full-information / no-disclosure artifacts on the 2-type environment."""
    return build_ibpa_artifacts(
        two_type_env, Regime.full_null(2), grid_size=20,
        solver_cfg=SolverConfig(seed=3, patience=15), mc_samples=4000, seed=11)


@pytest.fixture(scope="session")
def single_type_env():
    return make_single_type_env()
