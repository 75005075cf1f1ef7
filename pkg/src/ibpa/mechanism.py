"""Running one IBPA auction.

Artifacts are built per regime: the environment is coarsened to the
information partition, and each disclosure block defines a conditional
sub-problem (inventory renormalized to the block, priors projected) with its
own revenue curves, quantile mappers, and per-atom menu-choice tables.
At auction time advertisers are ranked by gamma_a * Phi'_a(q_a); the winner
of each slot pays according to its menu choice at the critical quantile.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import (
    AuctionEnvironment, AuctionInstance, CtrModel, InventoryDistribution,
    Regime, ValuationPrior, coarsen_environment,
)
from .curves import build_curve
from .quantiles import build_mapper, choice_tables
from .solver import SolverConfig

VACATE_TOL = 1e-9


@dataclass(frozen=True)
class MechanismOutcome:
    assignment: np.ndarray  # (S,) advertiser index or -1
    quantiles: np.ndarray  # (A,) mapped quantiles (GSP: bids)
    critical_quantiles: dict  # winner -> q_hat
    expected_payments: np.ndarray  # (A,)
    per_click_payments: np.ndarray  # (A,)
    utilities: np.ndarray  # (A,)
    revenue: float
    realized_type: int

    def __post_init__(self):
        winners = self.assignment[self.assignment >= 0]
        if np.unique(winners).size != winners.size:
            raise ValueError("an advertiser holds two slots")
        if abs(self.revenue - self.expected_payments.sum()) > 1e-9 * max(
                1.0, abs(self.revenue)):
            raise ValueError("revenue must equal the sum of payments")

    @property
    def allocated(self) -> bool:
        return bool((self.assignment >= 0).any())

    def to_json(self, seed=None) -> dict:
        return {
            "seed": seed,
            "type": int(self.realized_type) + 1,
            "assignment": [int(a) for a in self.assignment],
            "payments": self.expected_payments.tolist(),
            "utilities": self.utilities.tolist(),
            "revenue": self.revenue,
        }


def write_outcomes(path, outcomes, seeds=None):
    """Append-free JSON-lines dump of an outcome stream."""
    with open(path, "w") as f:
        for i, o in enumerate(outcomes):
            s = None if seeds is None else seeds[i]
            f.write(json.dumps(o.to_json(seed=s)) + "\n")


@dataclass
class _SubProblem:
    """Conditional mechanism for one disclosure block."""

    block_ids: np.ndarray  # coarse-block ids covered by this disclosure block
    p_local: np.ndarray
    beta_local: np.ndarray
    priors: list
    curves: list
    mappers: list  # [a][local_t] -> QuantileMapper
    chi_tables: list  # [a] -> (G+1, M_a, T_local) chosen chi per grid menu
    mu_tables: list  # [a] -> (G+1, M_a) chosen payment per grid menu
    cov_tables: list  # [a] -> (G+1, M_a) covered type mass of the choice


@dataclass
class IbpaArtifacts:
    env: AuctionEnvironment  # original environment
    regime: Regime
    cenv: AuctionEnvironment  # coarsened to information blocks
    class_tag: str
    block_of: np.ndarray  # original type -> information block
    disc_of: np.ndarray  # information block -> disclosure block
    local_of: np.ndarray  # information block -> index within its sub-problem
    subs: list


def build_ibpa_artifacts(env: AuctionEnvironment, regime: Regime,
                         class_tag: str = "full", grid_size: int = 50,
                         solver_cfg: SolverConfig | None = None,
                         mc_samples: int = 10_000, seed: int = 0,
                         seed_menus_fn=None) -> IbpaArtifacts:
    """Build curves, quantile mappers, and choice tables for a regime.

    seed_menus_fn(d, a, grid_index, q) -> list of Menu optionally warm-starts
    the per-grid-point solves (e.g. with another regime's expanded optima).
    Advertisers with identical priors share one curve per sub-problem.
    """
    cfg = solver_cfg or SolverConfig()
    cenv = coarsen_environment(env, regime)
    disc = cenv.disclosure
    block_of = regime.info.block_of
    disc_of = disc.block_of
    local_of = np.zeros(cenv.n_types, dtype=int)
    subs = []
    rng = np.random.default_rng(seed)
    for d, blocks in enumerate(disc.blocks()):
        for j, b in enumerate(blocks):
            local_of[b] = j
        mass = cenv.inventory.probs[blocks].sum()
        p_loc = cenv.inventory.probs[blocks] / mass
        beta_loc = cenv.ctr.type_effects[blocks]
        priors = [ValuationPrior(f.atoms[:, blocks], f.weights, f.label)
                  for f in cenv.priors]
        sub_env = AuctionEnvironment(
            InventoryDistribution(p_loc),
            CtrModel(cenv.ctr.slot_effects, beta_loc,
                     cenv.ctr.advertiser_quality),
            tuple(priors),
        )
        curves = []
        memo = {}
        for a, f in enumerate(priors):
            key = (f.atoms.tobytes(), f.weights.tobytes())
            if key not in memo:
                fn = None
                if seed_menus_fn is not None:
                    fn = lambda i, q, d=d, a=a: seed_menus_fn(d, a, i, q)
                memo[key] = build_curve(f, p_loc, beta_loc, class_tag,
                                        grid_size, cfg,
                                        seed_menus_per_point=fn)
            curves.append(memo[key])
        curve_map = dict(enumerate(curves))
        tables = [choice_tables(curves[a], priors[a], p_loc, beta_loc)
                  for a in range(len(priors))]
        mappers = [
            [build_mapper(curve_map, sub_env, a, t, mc_samples,
                          rng.integers(2 ** 63), tables=tables[a])
             for t in range(len(blocks))]
            for a in range(len(priors))
        ]
        subs.append(_SubProblem(
            blocks, p_loc, beta_loc, priors, curves, mappers,
            [t[0] for t in tables], [t[1] for t in tables],
            [(t[0] > VACATE_TOL) @ p_loc for t in tables]))
    return IbpaArtifacts(env, regime, cenv, class_tag, block_of,
                         disc_of, local_of, subs)


def map_quantiles(artifacts: IbpaArtifacts, instance: AuctionInstance,
                  rng) -> np.ndarray:
    """Realized quantile per advertiser for one instance."""
    blk = artifacts.block_of[instance.type_index]
    sub = artifacts.subs[artifacts.disc_of[blk]]
    lt = artifacts.local_of[blk]
    return np.array([
        sub.mappers[a][lt].map(None, rng, atom=int(instance.atom_indices[a]))
        for a in range(artifacts.env.n_advertisers)
    ])


def run_ibpa(artifacts: IbpaArtifacts, instance: AuctionInstance, rng,
             quantiles: np.ndarray | None = None) -> MechanismOutcome:
    """One auction: rank by marginal revenue, assign slots, charge winners.

    A winner whose chosen lottery does not cover the realized type vacates
    and the slot passes to the next candidate.
    """
    env = artifacts.env
    A, S = env.n_advertisers, env.n_slots
    t0 = instance.type_index
    blk = artifacts.block_of[t0]
    d = artifacts.disc_of[blk]
    lt = artifacts.local_of[blk]
    sub = artifacts.subs[d]
    gammas = env.ctr.advertiser_quality
    if quantiles is None:
        quantiles = map_quantiles(artifacts, instance, rng)
    mr = np.array([gammas[a] * sub.curves[a].marginal(quantiles[a])
                   for a in range(A)])
    order = sorted((a for a in range(A) if mr[a] > 0),
                   key=lambda a: (-mr[a], a))

    assignment = np.full(S, -1, dtype=int)
    pay = np.zeros(A)
    ppc = np.zeros(A)
    util = np.zeros(A)
    qhat = {}
    alpha = env.ctr.slot_effects
    s = pos = 0
    while s < S and pos < len(order):
        a = order[pos]
        pos += 1
        target = mr[order[pos]] if pos < len(order) else 0.0
        qh = sub.curves[a].inverse_marginal(target / gammas[a],
                                            at_least=float(quantiles[a]))
        qhat[a] = qh
        k = int(instance.atom_indices[a])
        lo, hi, lam = sub.curves[a].menu_mixture(qh)
        # M(q_hat) between grid points is a lottery over the two bracketing
        # grid menus: realize the menu draw, then apply that menu's choice
        g = hi if (hi != lo and lam > 0.0 and rng.random() < lam) else lo
        chi = sub.chi_tables[a][g, k, lt]
        mu = sub.mu_tables[a][g, k]
        # the chosen item grants the realized type with probability chi;
        # realize that draw too -- on failure the slot passes down.  Charging
        # mu / (chi * covered-mass) on success makes the expected charge
        # across types equal the item's mu: only covered types ever pay, so
        # the per-allocation charge is scaled up by the covered type mass.
        if chi <= VACATE_TOL or rng.random() >= chi:
            continue
        base = mu / (chi * sub.cov_tables[a][g, k])
        m_a = alpha[s] * gammas[a] * base
        assignment[s] = a
        pay[a] = m_a
        ppc[a] = base / sub.beta_local[lt]
        ctr = alpha[s] * env.ctr.type_effects[t0] * gammas[a]
        util[a] = ctr * instance.values[a, t0] - m_a
        s += 1
    return MechanismOutcome(assignment, quantiles, qhat, pay, ppc, util,
                            float(pay.sum()), t0)
