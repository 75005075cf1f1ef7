"""Constrained single-advertiser menu optimization.

Solves max_menu revenue subject to an ex-ante allocation-probability cap q
over three menu classes (full lotteries, binary bundles, additive pricing)
with a genetic search: population 100, 50 tournament-selected parents, 5
elites, blend crossover 0.8, per-gene mutation 0.2, cap violations penalized
in-objective. Deterministic given the seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .core import InvalidInputError, ValuationPrior
from .menus import (
    LotteryPricing, Menu, MenuStats, best_bundles, menu_stats, null_item,
)


@dataclass(frozen=True)
class SolverConfig:
    pop_size: int = 100
    n_parents: int = 50
    n_elites: int = 5
    crossover_rate: float = 0.8
    mutation_rate: float = 0.2
    max_generations: int = 300
    patience: int = 40  # early stop after this many stagnant generations
    penalty: float = 1e4  # scaled by the objective scale
    k_max: int = 8  # menu length cap for the full class
    seed: int = 0
    lp_seed: bool = True  # seed the full class with the exact LP optimum


@dataclass(frozen=True)
class SolveResult:
    menu: Menu
    stats: MenuStats
    converged: bool
    generations: int

    def __iter__(self):  # unpack as (menu, stats)
        return iter((self.menu, self.stats))


class _Problem:
    """Shared precomputation for one (prior, p, beta, q) instance."""

    def __init__(self, prior: ValuationPrior, p, beta, q: float):
        self.p = np.asarray(p, dtype=float)
        self.beta = np.asarray(beta, dtype=float)
        self.q = float(q)
        self.prior = prior
        self.weights = prior.weights
        self.veff = prior.atoms * self.beta  # CTR-weighted values
        self.W = prior.atoms * (self.p * self.beta)  # per-type utility weights
        self.grand = self.W.sum(axis=1)  # grand-bundle surplus per atom
        self.mu_max = max(float(self.grand.max(initial=0.0)), 1e-9)
        self.vmax = np.maximum(self.veff.max(axis=0), 1e-9)
        self.T = self.p.size

    def posted_price(self, cap: float) -> float:
        """Grand-bundle posted price selling to at most `cap` prior mass."""
        order = np.argsort(-self.grand)
        cum = np.cumsum(self.weights[order])
        sold = np.searchsorted(cum, cap + 1e-12, side="right")
        if sold == 0:
            return self.mu_max * (1 + 1e-9)
        return float(self.grand[order[sold - 1]])

    def monopoly_price(self) -> float:
        prices = np.unique(self.grand)
        best, best_rev = self.mu_max, -1.0
        for r in prices:
            rev = r * self.weights[self.grand >= r - 1e-15].sum()
            if rev > best_rev:
                best, best_rev = r, rev
        return float(best)


def _choose(util: np.ndarray, pay: np.ndarray) -> np.ndarray:
    """Argmax item per atom row, ties to the highest payment then lowest index."""
    scale = max(1.0, float(np.abs(util).max(initial=0.0)))
    near = util >= util.max(axis=-1, keepdims=True) - 1e-12 * scale
    masked = np.where(near, pay, -np.inf)
    return np.argmax(near & (masked >= masked.max(axis=-1, keepdims=True)), axis=-1)


class _FullCodec:
    """Genome: K items x (T allocation probs + 1 payment), flattened."""

    tag = "full"

    def __init__(self, prob: _Problem, k_max: int):
        self.prob = prob
        self.K = k_max
        T = prob.T
        self.lo = np.zeros(self.K * (T + 1))
        self.hi = np.concatenate(
            [np.ones(self.K * T), np.full(self.K, prob.mu_max * 1.001)]
        )

    def split(self, genomes: np.ndarray):
        P = genomes.shape[0]
        T = self.prob.T
        alloc = genomes[:, : self.K * T].reshape(P, self.K, T)
        mu = genomes[:, self.K * T:]
        return alloc, mu

    def evaluate(self, genomes: np.ndarray):
        prob = self.prob
        alloc, mu = self.split(genomes)
        P = genomes.shape[0]
        gross = (prob.W @ alloc.reshape(-1, prob.T).T).reshape(-1, P, self.K)
        gross = np.concatenate([gross, np.zeros((gross.shape[0], P, 1))], axis=2)
        pay = np.concatenate([mu, np.zeros((P, 1))], axis=1)
        util = gross.transpose(1, 0, 2) - pay[:, None, :]
        choice = _choose(util, pay[:, None, :])  # (P, M)
        pal = np.concatenate([alloc @ prob.p, np.zeros((P, 1))], axis=1)
        revenue = np.take_along_axis(pay, choice, axis=1) @ prob.weights
        alloc_prob = np.take_along_axis(pal, choice, axis=1) @ prob.weights
        return revenue, alloc_prob

    def to_menu(self, genome: np.ndarray) -> Menu:
        alloc, mu = self.split(genome[None])
        items = [null_item(self.prob.T)] + [
            LotteryPricing(a, m) for a, m in zip(alloc[0], mu[0])
        ]
        return _pruned(Menu(tuple(items), self.tag), self.prob)

    def encode(self, menu: Menu) -> np.ndarray | None:
        items = [it for it in menu.items if not it.is_null][: self.K]
        if any(it.alloc.size != self.prob.T for it in items):
            return None
        alloc = np.zeros((self.K, self.prob.T))
        mu = np.zeros(self.K)
        for i, it in enumerate(items):
            alloc[i] = np.clip(it.alloc, 0, 1)
            mu[i] = it.payment
        return np.concatenate([alloc.ravel(), mu])

    def seeds(self) -> list[np.ndarray]:
        prob = self.prob
        out = [np.zeros(self.lo.size)]
        for price in {prob.posted_price(prob.q), prob.monopoly_price()}:
            g = np.zeros(self.lo.size)
            g[: prob.T] = 1.0  # item 1: grand bundle
            g[self.K * prob.T] = price
            out.append(g)
        # per-type posted prices as separate single-type items
        g = np.zeros(self.lo.size)
        for t in range(min(prob.T, self.K)):
            g[t * prob.T + t] = 1.0
            g[self.K * prob.T + t] = _type_monopoly(prob, t)
        out.append(g)
        return out


class _BinaryCodec:
    """Genome: one price per non-empty bundle (2^T - 1 of them)."""

    tag = "binary"

    def __init__(self, prob: _Problem, k_max: int = 0):
        if prob.T > 12:
            raise InvalidInputError("binary-class genome requires T <= 12")
        self.prob = prob
        T = prob.T
        codes = np.arange(1, 2 ** T)
        self.bundles = (codes[:, None] >> np.arange(T)) & 1  # (K, T) in {0,1}
        self.G = prob.W @ self.bundles.T  # (M, K) bundle surplus per atom
        self.pal = self.bundles @ prob.p
        self.lo = np.zeros(codes.size)
        self.hi = np.maximum(self.G.max(axis=0), 0.0) * 1.001 + 1e-9

    def evaluate(self, genomes: np.ndarray):
        P = genomes.shape[0]
        revenue = np.empty(P)
        alloc_prob = np.empty(P)
        pal = np.concatenate([self.pal, [0.0]])
        for i in range(P):
            prices = genomes[i]
            util = np.concatenate(
                [self.G - prices, np.zeros((self.G.shape[0], 1))], axis=1
            )
            pay = np.concatenate([prices, [0.0]])
            choice = _choose(util, pay)
            revenue[i] = pay[choice] @ self.prob.weights
            alloc_prob[i] = pal[choice] @ self.prob.weights
        return revenue, alloc_prob

    def to_menu(self, genome: np.ndarray) -> Menu:
        items = [null_item(self.prob.T)] + [
            LotteryPricing(b.astype(float), m)
            for b, m in zip(self.bundles, genome)
        ]
        return _pruned(Menu(tuple(items), self.tag), self.prob)

    def encode(self, menu: Menu) -> np.ndarray | None:
        if menu.n_types != self.prob.T:
            return None
        g = self.hi.copy()
        powers = 2 ** np.arange(self.prob.T)
        for it in menu.items:
            if it.is_null:
                continue
            mask = it.alloc > 0.5
            if not np.array_equal(it.alloc, mask.astype(float)):
                return None
            g[int(mask @ powers) - 1] = min(it.payment, self.hi[int(mask @ powers) - 1])
        return g

    def seeds(self) -> list[np.ndarray]:
        prob = self.prob
        out = [self.hi.copy()]
        for price in {prob.posted_price(prob.q), prob.monopoly_price()}:
            g = self.hi.copy()
            g[-1] = min(price, self.hi[-1])  # grand bundle is the last code
            out.append(g)
        # additive-from-type-monopoly pricing of every bundle
        tp = np.array([_type_monopoly(prob, t) for t in range(prob.T)])
        out.append(np.minimum(self.bundles @ (prob.p * tp), self.hi))
        return out


class _AdditiveCodec:
    """Genome: entry fee rho0 followed by per-type prices rho_t."""

    tag = "additive"

    def __init__(self, prob: _Problem, k_max: int = 0):
        self.prob = prob
        self.lo = np.zeros(prob.T + 1)
        self.hi = np.concatenate([[prob.mu_max * 1.001], prob.vmax * 1.001])

    def evaluate(self, genomes: np.ndarray):
        P = genomes.shape[0]
        revenue = np.empty(P)
        alloc_prob = np.empty(P)
        for i in range(P):
            sigma, _, charge = best_bundles(
                genomes[i, 0], genomes[i, 1:], self.prob.veff, self.prob.p
            )
            revenue[i] = charge @ self.prob.weights
            alloc_prob[i] = (sigma @ self.prob.p) @ self.prob.weights
        return revenue, alloc_prob

    def to_menu(self, genome: np.ndarray) -> Menu:
        from .menus import additive_menu
        ones = np.ones(self.prob.T)
        return additive_menu(
            float(genome[0]), genome[1:], self.prob.p,
            ValuationPrior(self.prob.veff, self.prob.weights), beta=ones,
        )

    def encode(self, menu: Menu) -> np.ndarray | None:
        if menu.rho is None or menu.rho.size != self.prob.T:
            return None
        return np.clip(np.concatenate([[menu.rho0], menu.rho]), self.lo, self.hi)

    def seeds(self) -> list[np.ndarray]:
        prob = self.prob
        out = [self.hi.copy()]  # null (prices above every value)
        for price in {prob.posted_price(prob.q), prob.monopoly_price()}:
            out.append(np.concatenate([[price], np.zeros(prob.T)]))
        tp = [_type_monopoly(prob, t) for t in range(prob.T)]
        out.append(np.concatenate([[0.0], tp]))
        return out


def _type_monopoly(prob: _Problem, t: int) -> float:
    """Monopoly posted price for type t alone (per-unit of beta-value)."""
    vals = np.unique(prob.veff[:, t])
    best, best_rev = prob.vmax[t], -1.0
    for r in vals:
        rev = r * prob.weights[prob.veff[:, t] >= r - 1e-15].sum()
        if rev > best_rev:
            best, best_rev = r, rev
    return float(best)


def _pruned(menu: Menu, prob: _Problem) -> Menu:
    """Drop items no prior atom chooses; choices are unchanged."""
    stats = menu_stats(menu, prob.prior, prob.p, prob.beta)
    keep = [menu.items[0]] + [
        it for it, xi in zip(menu.items[1:], stats.choice_probs[1:]) if xi > 0
    ]
    return Menu(tuple(keep), menu.class_tag, rho0=menu.rho0, rho=menu.rho)


def solve_full_lp(prior: ValuationPrior, p, beta, q: float) -> Menu | None:
    """Exact full-class optimum by linear programming.

    By the taxation principle the menu can carry one item per prior atom:
    maximize sum_k w_k mu_k over chi in [0,1]^{M x T} and mu >= 0 subject to
    IC (each atom prefers its own item), IR (against the null item), and the
    ex-ante cap sum_k w_k p.chi_k <= q. All constraints are linear.
    """
    prob = _Problem(prior, p, beta, q)
    M, T = prior.n_atoms, prob.T
    n = M * T + M  # chi row-major, then mu
    c = np.concatenate([np.zeros(M * T), -prior.weights])
    rows, rhs = [], []
    for k in range(M):
        own = np.zeros(n)
        own[k * T:(k + 1) * T] = prob.W[k]
        own[M * T + k] = -1.0
        for j in range(M):
            if j == k:
                continue
            other = np.zeros(n)
            other[j * T:(j + 1) * T] = prob.W[k]
            other[M * T + j] = -1.0
            rows.append(other - own)  # IC: u_k(item_j) - u_k(item_k) <= 0
            rhs.append(0.0)
        rows.append(-own)  # IR
        rhs.append(0.0)
    cap = np.zeros(n)
    cap[: M * T] = (prior.weights[:, None] * prob.p[None, :]).ravel()
    rows.append(cap)
    rhs.append(q)
    bounds = [(0.0, 1.0)] * (M * T) + [(0.0, None)] * M
    res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds,
                  method="highs")
    if not res.success:
        warnings.warn("full-class LP failed; falling back to genetic search",
                      RuntimeWarning)
        return None
    chi = np.clip(res.x[: M * T].reshape(M, T), 0.0, 1.0)
    mu = np.maximum(res.x[M * T:], 0.0)
    items = [null_item(T)] + [LotteryPricing(chi[k], float(mu[k]))
                              for k in range(M)]
    return _pruned(Menu(tuple(items), "full"), prob)


_CODECS = {"full": _FullCodec, "binary": _BinaryCodec, "additive": _AdditiveCodec}


def solve_constrained(prior: ValuationPrior, p, beta, q: float,
                      class_tag: str = "full",
                      solver_cfg: SolverConfig | None = None,
                      seed_menus=()) -> SolveResult:
    """Maximize menu revenue subject to alloc_prob <= q via genetic search.

    seed_menus are injected into the initial population when they encode in
    the requested class (warm starts from neighboring grid points, coarser
    regimes, or simpler classes).
    """
    cfg = solver_cfg or SolverConfig()
    if not 0.0 <= q <= 1.0:
        raise InvalidInputError("cap q must lie in [0,1]")
    prob = _Problem(prior, p, beta, q)
    if class_tag not in _CODECS:
        raise InvalidInputError(f"unknown menu class {class_tag!r}")
    codec = _CODECS[class_tag](prob, cfg.k_max)

    if q == 0.0 or prob.mu_max <= 1e-12:
        menu = Menu((null_item(prob.T),), class_tag)
        return SolveResult(menu, menu_stats(menu, prior, prob.p, prob.beta),
                           True, 0)

    rng = np.random.default_rng(cfg.seed)
    lo, hi = codec.lo, codec.hi
    span = hi - lo

    lp_result = None
    # the LP has one IC row per ordered atom pair, so restrict it to small
    # priors; large lattices rely on the genetic search and heuristic seeds
    if class_tag == "full" and cfg.lp_seed and prior.n_atoms <= 64:
        lp_menu = solve_full_lp(prior, p, beta, q)
        if lp_menu is not None:
            lp_stats = menu_stats(lp_menu, prior, prob.p, prob.beta)
            if lp_stats.alloc_prob <= q + 1e-9:
                lp_result = (lp_menu, lp_stats)
                seed_menus = (*seed_menus, lp_menu)

    seeds = codec.seeds()
    for m in seed_menus:
        g = codec.encode(m)
        if g is not None:
            seeds.append(np.clip(g, lo, hi))
    rows = seeds[: cfg.pop_size]
    n_rand = cfg.pop_size - len(rows)
    if n_rand > 0:
        rows.append(lo + rng.random((n_rand, lo.size)) * span)
    pop = np.vstack(rows)

    penalty = cfg.penalty * max(prob.mu_max, 1.0)
    # the null seed is always feasible, so a feasible best always exists
    best_rev, best_genome, stagnant = -np.inf, pop[0].copy(), 0
    gen = 0
    for gen in range(1, cfg.max_generations + 1):
        revenue, alloc = codec.evaluate(pop)
        fitness = revenue - penalty * np.maximum(alloc - q - 1e-9, 0.0)
        feas_rev = np.where(alloc <= q + 1e-9, revenue, -np.inf)
        top = int(np.argmax(feas_rev))
        if feas_rev[top] > best_rev + 1e-6 * prob.mu_max:
            best_rev, best_genome, stagnant = feas_rev[top], pop[top].copy(), 0
        elif feas_rev[top] > best_rev:
            # keep micro-improvements but count them as stagnation
            best_rev, best_genome = feas_rev[top], pop[top].copy()
            stagnant += 1
        else:
            stagnant += 1
        if cfg.patience and stagnant >= cfg.patience:
            break

        order = np.argsort(-fitness)
        elites = pop[order[: cfg.n_elites]]
        # tournament selection of parents
        draws = rng.integers(0, pop.shape[0], size=(cfg.n_parents, 3))
        parents = pop[draws[np.arange(cfg.n_parents), np.argmax(fitness[draws], axis=1)]]

        n_children = cfg.pop_size - cfg.n_elites
        pa = parents[rng.integers(0, cfg.n_parents, n_children)]
        pb = parents[rng.integers(0, cfg.n_parents, n_children)]
        blend = rng.uniform(-0.25, 1.25, size=pa.shape)
        cross = rng.random(n_children) < cfg.crossover_rate
        children = np.where(cross[:, None], pa + blend * (pb - pa), pa)
        mutate = rng.random(children.shape) < cfg.mutation_rate
        children = children + mutate * rng.normal(0.0, 0.1, children.shape) * span
        pop = np.vstack([elites, np.clip(children, lo, hi)])

    converged = stagnant >= cfg.patience or cfg.max_generations == 0
    if not converged:
        warnings.warn(
            f"menu solver hit max_generations={cfg.max_generations} "
            f"without stabilizing (class={class_tag}, q={q:.3f})",
            RuntimeWarning,
        )
    menu = codec.to_menu(best_genome)
    stats = menu_stats(menu, prior, prob.p, prob.beta)
    if lp_result is not None and lp_result[1].revenue > stats.revenue:
        menu, stats = lp_result
    return SolveResult(menu, stats, converged, gen)
