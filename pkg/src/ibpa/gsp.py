"""Generalized second-price benchmark.

Advertisers are ranked by bid times quality and each pays the minimum
per-click bid needed to retain its slot. Bids come from either a truthful
proxy or the revenue-maximal envy-free profile; under any regime, only the
disclosure partition matters (the auction is outcome-equivalent to
(P_disc, P_disc)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    AuctionEnvironment, AuctionInstance, InvalidInputError, Regime,
    coarsen_values,
)
from .mechanism import MechanismOutcome

EQUILIBRIA = ("envy_free_upper", "truthful_proxy")


@dataclass(frozen=True)
class GspConfig:
    regime: Regime
    reserve: float = 0.0  # per-click
    equilibrium: str = "envy_free_upper"

    def __post_init__(self):
        if self.equilibrium not in EQUILIBRIA:
            raise InvalidInputError(f"unknown equilibrium {self.equilibrium!r}")
        if self.reserve < 0:
            raise InvalidInputError("reserve must be non-negative")


def envy_free_upper_bids(gamma_values, alpha, reserve: float = 0.0) -> np.ndarray:
    """Score profile (gamma_a * b_a) of the revenue-maximal envy-free bids.

    gamma_values must be sorted descending. The payment level of each slot
    is built bottom-up so the envy-free upper bound binds at equality:
    p_s alpha_s = w_{s+1} (alpha_s - alpha_{s+1}) + p_{s+1} alpha_{s+1},
    with alpha beyond the last slot treated as 0 and the bid below the last
    occupied slot equal to the reserve when no bidder remains. The rank-s+1
    score is set to p_s, so the slot-s winner pays exactly the bound; the
    resulting ICCs equal w_{s+1}, inside the envy-free band.
    """
    w = np.asarray(gamma_values, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(np.diff(w) > 1e-12):
        raise InvalidInputError("gamma_values must be sorted descending")
    A, S = w.size, alpha.size
    if A == 0:
        return np.array([])
    n = min(A, S)
    p = np.zeros(n + 2)  # p[s] = per-click payment level of slot s, 1-based
    # bottom occupied slot: priced by the first loser (alpha beyond S is 0),
    # or by the reserve when every bidder holds a slot
    p[n] = w[n] if A > n else reserve
    for s in range(n - 1, 0, -1):
        a_s, a_next = alpha[s - 1], alpha[s]
        p[s] = (w[s] * (a_s - a_next) + p[s + 1] * a_next) / a_s
    scores = w.copy()
    for s in range(1, min(n + 1, A)):
        scores[s] = p[s]
    # remaining losers keep truthful scores, capped to preserve the ranking
    for k in range(1, A):
        scores[k] = min(scores[k], scores[k - 1])
    return scores


def run_gsp(env: AuctionEnvironment, config: GspConfig,
            instance: AuctionInstance) -> MechanismOutcome:
    """One GSP auction under the config's disclosure regime."""
    A, S = env.n_advertisers, env.n_slots
    t0 = instance.type_index
    disc = config.regime.disc
    p, beta = env.inventory.probs, env.ctr.type_effects
    gammas = env.ctr.advertiser_quality
    blk = disc.block_of[t0]
    # value each advertiser can condition on: its disclosed-block expectation
    v_disc = coarsen_values(instance.values, p, beta, disc)[:, blk]

    order = np.lexsort((np.arange(A), -gammas * v_disc))
    w_sorted = (gammas * v_disc)[order]
    if config.equilibrium == "truthful_proxy":
        scores_sorted = w_sorted.copy()
    else:
        scores_sorted = envy_free_upper_bids(w_sorted, env.ctr.slot_effects,
                                             config.reserve)

    alpha = env.ctr.slot_effects
    assignment = np.full(S, -1, dtype=int)
    pay = np.zeros(A)
    ppc = np.zeros(A)
    util = np.zeros(A)
    bids = np.zeros(A)
    bids[order] = scores_sorted / gammas[order]
    n = min(A, S)
    for s in range(n):
        a = int(order[s])
        if scores_sorted[s] <= config.reserve or w_sorted[s] <= 0:
            break
        price = (scores_sorted[s + 1] / gammas[a] if s + 1 < A
                 else config.reserve)
        price = max(price, config.reserve)
        assignment[s] = a
        ppc[a] = price
        ctr = alpha[s] * beta[t0] * gammas[a]
        pay[a] = ctr * price
        util[a] = ctr * (instance.values[a, t0] - price)
    return MechanismOutcome(assignment, bids, {}, pay, ppc, util,
                            float(pay.sum()), t0)
