"""GSP benchmark: bid recursion oracles, envy-freeness, regime collapse."""

import numpy as np
import pytest

from ibpa.core import (
    AuctionEnvironment, AuctionInstance, CtrModel, InvalidInputError,
    InventoryDistribution, Partition, Regime, ValuationPrior, sample_auction,
)
from ibpa.gsp import EQUILIBRIA, GspConfig, envy_free_upper_bids, run_gsp

from conftest import make_two_type_env, random_env


def single_type_env(values, alpha):
    """One deterministic atom per advertiser, a single inventory type."""
    priors = tuple(ValuationPrior(np.array([[v]]), np.array([1.0]))
                   for v in values)
    return AuctionEnvironment(
        InventoryDistribution(np.array([1.0])),
        CtrModel(np.asarray(alpha, dtype=float), np.array([1.0]),
                 np.ones(len(values))),
        priors)


def instance_for(env):
    A = env.n_advertisers
    values = np.stack([f.atoms[0] for f in env.priors])
    return AuctionInstance(0, np.zeros(A, dtype=int), values)


def test_single_slot_is_second_price():
    env = single_type_env([0.9, 0.6], [1.0])
    out = run_gsp(env, GspConfig(Regime.full_null(1)), instance_for(env))
    assert out.assignment[0] == 0
    assert out.per_click_payments[0] == pytest.approx(0.6)


def test_truthful_proxy_example():
    # scores (10,6,4), alpha=(1,0.5): prices (6,4), revenue 1*6 + 0.5*4 = 8
    env = single_type_env([10.0, 6.0, 4.0], [1.0, 0.5])
    cfg = GspConfig(Regime.full_null(1), equilibrium="truthful_proxy")
    out = run_gsp(env, cfg, instance_for(env))
    assert out.per_click_payments[0] == pytest.approx(6.0)
    assert out.per_click_payments[1] == pytest.approx(4.0)
    assert out.revenue == pytest.approx(8.0)


def test_envy_free_upper_example():
    # bottom-up recursion: p2 = 4, p1 = (6*(1-0.5) + 4*0.5)/1 = 5
    scores = envy_free_upper_bids([10.0, 6.0, 4.0], [1.0, 0.5])
    assert scores[1] == pytest.approx(5.0)
    assert scores[2] == pytest.approx(4.0)
    env = single_type_env([10.0, 6.0, 4.0], [1.0, 0.5])
    out = run_gsp(env, GspConfig(Regime.full_null(1)), instance_for(env))
    assert out.revenue == pytest.approx(1.0 * 5.0 + 0.5 * 4.0)


def test_equal_values_pay_the_common_value():
    scores = envy_free_upper_bids([3.0, 3.0, 3.0], [1.0, 0.5])
    assert np.allclose(scores[1:], 3.0)


def test_envy_free_inequalities_hold():
    """No winner prefers another slot at its price, upper bound binding."""
    rng = np.random.default_rng(14)
    for _ in range(50):
        A = int(rng.integers(2, 6))
        S = int(rng.integers(1, 5))
        alpha = np.concatenate([[1.0],
                                np.sort(rng.uniform(0.05, 0.95, S - 1))[::-1]])
        w = np.sort(rng.uniform(0.1, 1.0, A))[::-1]
        scores = envy_free_upper_bids(w, alpha)
        n = min(A, S)
        prices = np.array([scores[s + 1] if s + 1 < A else 0.0
                           for s in range(n)])
        a_ext = np.concatenate([alpha, np.zeros(A)])
        for s in range(n):
            u_own = a_ext[s] * (w[s] - prices[s])
            for s2 in range(n):
                u_other = a_ext[s2] * (w[s] - prices[s2])
                assert u_own >= u_other - 1e-9
            # and no envy of staying out
            assert u_own >= -1e-9


def test_truthful_weakly_beats_envy_free_upper_per_instance():
    """The upper-bound profile shades scores below truth, so next-price
    payments under it never exceed the truthful-proxy payments."""
    rng = np.random.default_rng(15)
    for _ in range(30):
        env = random_env(rng)
        inst = sample_auction(env, rng)
        regime = Regime.of(Partition.full(env.n_types))
        r_truth = run_gsp(env, GspConfig(regime, equilibrium="truthful_proxy"),
                          inst).revenue
        r_upper = run_gsp(env, GspConfig(regime), inst).revenue
        assert r_truth >= r_upper - 1e-9


def test_only_disclosure_partition_matters():
    env = make_two_type_env()
    rng = np.random.default_rng(3)
    full, null = Partition.full(2), Partition.null(2)
    for _ in range(40):
        inst = sample_auction(env, rng)
        a = run_gsp(env, GspConfig(Regime(full, null)), inst)
        b = run_gsp(env, GspConfig(Regime(null, null)), inst)
        assert np.array_equal(a.assignment, b.assignment)
        assert np.allclose(a.expected_payments, b.expected_payments)


def test_reserve_excludes_low_scores():
    env = single_type_env([0.5, 0.3], [1.0])
    out = run_gsp(env, GspConfig(Regime.full_null(1), reserve=0.7),
                  instance_for(env))
    assert not out.allocated
    out = run_gsp(env, GspConfig(Regime.full_null(1), reserve=0.4),
                  instance_for(env))
    assert out.assignment[0] == 0
    assert out.per_click_payments[0] == pytest.approx(0.4)


def test_payment_identity_and_utility():
    env = make_two_type_env()
    rng = np.random.default_rng(4)
    cfg = GspConfig(Regime.of(Partition.full(2)), equilibrium="truthful_proxy")
    for _ in range(30):
        inst = sample_auction(env, rng)
        out = run_gsp(env, cfg, inst)
        assert out.revenue == pytest.approx(out.expected_payments.sum())
        for s, a in enumerate(out.assignment):
            if a < 0:
                continue
            ctr = env.ctr.ctr(a, s, inst.type_index)
            assert out.expected_payments[a] == pytest.approx(
                ctr * out.per_click_payments[a])
            assert out.utilities[a] == pytest.approx(
                ctr * (inst.values[a, inst.type_index]
                       - out.per_click_payments[a]))


def test_config_validation():
    regime = Regime.full_null(1)
    assert set(EQUILIBRIA) == {"envy_free_upper", "truthful_proxy"}
    with pytest.raises(InvalidInputError):
        GspConfig(regime, equilibrium="nash")
    with pytest.raises(InvalidInputError):
        GspConfig(regime, reserve=-1.0)
    with pytest.raises(InvalidInputError):
        envy_free_upper_bids([1.0, 2.0], [1.0])  # not sorted descending
