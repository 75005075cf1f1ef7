"""Domain types: validation, partitions, coarsening, serialization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ibpa.core import (
    AuctionEnvironment, CtrModel, InvalidInputError, InventoryDistribution,
    Partition, Regime, RegimeError, ValuationPrior, coarsen_environment,
    coarsen_values, environment_from_json, environment_to_json,
    is_refinement, load_environment, sample_auction, save_environment,
)

from conftest import make_two_type_env, random_env


def test_inventory_validation():
    InventoryDistribution(np.array([0.25, 0.75]))
    with pytest.raises(InvalidInputError):
        InventoryDistribution(np.array([0.5, 0.6]))
    with pytest.raises(InvalidInputError):
        InventoryDistribution(np.array([-0.1, 1.1]))
    with pytest.raises(InvalidInputError):
        InventoryDistribution(np.array([[0.5, 0.5]]))


def test_ctr_model_validation():
    ok = CtrModel(np.array([1.0, 0.4]), np.array([1.0, 0.7]),
                  np.array([0.9, 0.8]))
    assert ok.ctr(0, 1, 1) == pytest.approx(0.4 * 0.7 * 0.9)
    with pytest.raises(InvalidInputError):  # increasing slot effects
        CtrModel(np.array([1.0, 1.2]), np.array([1.0]), np.array([0.5]))
    with pytest.raises(InvalidInputError):  # top slot not normalized
        CtrModel(np.array([0.9, 0.4]), np.array([1.0]), np.array([0.5]))
    with pytest.raises(InvalidInputError):  # CTR above 1
        CtrModel(np.array([1.0]), np.array([1.5]), np.array([0.9]))


def test_valuation_prior_validation():
    with pytest.raises(InvalidInputError):
        ValuationPrior(np.array([[0.5], [-0.1]]), np.array([0.5, 0.5]))
    with pytest.raises(InvalidInputError):
        ValuationPrior(np.array([[0.5], [0.6]]), np.array([0.5, 0.6]))
    f = ValuationPrior.from_samples(np.arange(5, dtype=float)[:, None])
    assert f.n_atoms == 5 and f.n_types == 1
    assert np.allclose(f.weights, 0.2)


def test_prior_from_sampler_is_fixed():
    rng = np.random.default_rng(0)
    f = ValuationPrior.from_sampler(lambda r: r.uniform(size=3), 10, rng)
    assert f.atoms.shape == (10, 3)
    assert np.allclose(f.weights.sum(), 1.0)


def test_partition_constructors():
    p = Partition.from_blocks([[0, 2], [1]])
    assert p.block_count == 2
    assert [b.tolist() for b in p.blocks()] == [[0, 2], [1]]
    assert Partition.full(3).is_full()
    assert Partition.null(3).is_null()
    with pytest.raises(InvalidInputError):  # type in two blocks
        Partition.from_blocks([[0, 1], [1]])
    with pytest.raises(InvalidInputError):  # non-contiguous labels
        Partition(np.array([0, 2]))


@st.composite
def partitions(draw, n_types=4):
    labels = draw(st.lists(st.integers(0, n_types - 1), min_size=n_types,
                           max_size=n_types))
    _, block_of = np.unique(labels, return_inverse=True)
    return Partition(block_of)


@given(partitions())
def test_refinement_reflexive_and_extremes(p):
    assert is_refinement(p, p)
    assert is_refinement(Partition.full(p.n_types), p)
    assert is_refinement(p, Partition.null(p.n_types))


@settings(max_examples=200)
@given(partitions(), partitions(), partitions())
def test_refinement_transitive(p1, p2, p3):
    if is_refinement(p1, p2) and is_refinement(p2, p3):
        assert is_refinement(p1, p3)


def test_regime_requires_feasible_pair():
    with pytest.raises(RegimeError):
        Regime(Partition.null(3), Partition.full(3))
    r = Regime.full_null(3)
    assert r.info.is_full() and r.disc.is_null()
    assert Regime.of(Partition.full(2)).disc.is_full()


def test_coarsen_values_weighted_average():
    p = np.array([0.2, 0.3, 0.5])
    beta = np.array([1.0, 0.5, 0.8])
    values = np.array([[1.0, 2.0, 3.0]])
    info = Partition.from_blocks([[0, 1], [2]])
    out = coarsen_values(values, p, beta, info)
    w0 = p[:2] * beta[:2]
    assert out[0, 0] == pytest.approx((values[0, :2] * w0).sum() / w0.sum())
    assert out[0, 1] == pytest.approx(3.0)


def test_coarsen_environment_preserves_block_utility():
    """Expected per-click utility of any block-constant allocation survives."""
    rng = np.random.default_rng(5)
    env = random_env(rng, n_types=4)
    info = Partition.from_blocks([[0, 3], [1, 2]])
    regime = Regime.of(info)
    cenv = coarsen_environment(env, regime)
    chi_blocks = rng.uniform(size=info.block_count)
    chi = chi_blocks[info.block_of]
    p, beta = env.inventory.probs, env.ctr.type_effects
    for f, cf in zip(env.priors, cenv.priors):
        fine = (f.atoms * (p * beta * chi)).sum(axis=1)
        coarse = (cf.atoms * (cenv.inventory.probs * cenv.ctr.type_effects
                              * chi_blocks)).sum(axis=1)
        assert np.allclose(fine, coarse)


def test_coarsen_environment_identity_and_disclosure():
    env = make_two_type_env()
    cenv = coarsen_environment(env, Regime.full_null(2))
    assert cenv.n_types == 2
    assert cenv.disclosure.is_null()
    cenv = coarsen_environment(env, Regime.of(Partition.null(2)))
    assert cenv.n_types == 1
    assert cenv.disclosure.is_null()


def test_sample_auction_deterministic_and_distributed():
    env = make_two_type_env()
    a = sample_auction(env, 123)
    b = sample_auction(env, 123)
    assert a.type_index == b.type_index
    assert np.array_equal(a.atom_indices, b.atom_indices)
    rng = np.random.default_rng(0)
    types = [sample_auction(env, rng).type_index for _ in range(4000)]
    assert np.mean(np.asarray(types) == 0) == pytest.approx(0.4, abs=0.03)


def test_environment_json_roundtrip(tmp_path):
    env = make_two_type_env()
    regime = Regime.full_null(2)
    path = tmp_path / "env.json"
    save_environment(path, env, regime)
    env2, regime2 = load_environment(path)
    assert np.allclose(env2.inventory.probs, env.inventory.probs)
    assert np.allclose(env2.ctr.slot_effects, env.ctr.slot_effects)
    assert np.array_equal(regime2.info.block_of, regime.info.block_of)
    for f, f2 in zip(env.priors, env2.priors):
        assert np.allclose(f.atoms, f2.atoms)
        assert np.allclose(f.weights, f2.weights)


def test_environment_json_defaults():
    doc = environment_to_json(make_two_type_env())
    env, regime = environment_from_json(doc)
    assert regime.info.is_full() and regime.disc.is_null()
    assert env.n_advertisers == 3


def test_environment_dimension_checks():
    env = make_two_type_env()
    with pytest.raises(InvalidInputError):
        AuctionEnvironment(InventoryDistribution(np.array([1.0])),
                           env.ctr, env.priors)
