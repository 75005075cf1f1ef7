"""Quantile mappings from realized valuations to positions on the curve.

Each mapper assigns every prior atom an interval of cumulative prior mass;
map() draws uniformly within the atom's interval, which makes the mapped
quantile exactly Uniform[0,1] when valuations follow the prior, regardless
of ties or flat curve regions (ties share one interval).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import AuctionEnvironment, InvalidInputError, ValuationPrior
from .curves import RevenueCurve
from .menus import choice_indices


class NonDeterministicMenuError(ValueError):
    """Nested construction requires 0/1 allocations; use interim mode."""


@dataclass(frozen=True)
class QuantileMapper:
    """Per-atom quantile intervals for one (advertiser, type) pair."""

    mode: str  # nested | interim
    atoms: np.ndarray  # (M, T) prior atoms, for nearest-atom fallback
    metric_weights: np.ndarray  # CTR weights for the fallback distance
    q_lo: np.ndarray  # (M,) interval lower edge per atom
    q_hi: np.ndarray  # (M,) interval upper edge per atom
    rank_key: np.ndarray  # (M,) interim allocation (or -threshold-q) per atom
    x_alloc: np.ndarray | None = None  # (M,) raw interim allocation of type t
    charge: np.ndarray | None = None  # (M,) per-allocation payment m(v)/x_at(v)

    def atom_index(self, v) -> int:
        v = np.asarray(v, dtype=float)
        d2 = ((self.atoms - v) ** 2) @ self.metric_weights
        i = int(np.argmin(d2))
        if d2[i] > 1e-18 * max(1.0, float((v * v) @ self.metric_weights)):
            warnings.warn("valuation not in prior support; using nearest atom",
                          RuntimeWarning)
        return i

    def map(self, v, rng, atom: int | None = None) -> float:
        """Quantile for valuation v; random only within its tie interval."""
        i = self.atom_index(v) if atom is None else atom
        lo, hi = self.q_lo[i], self.q_hi[i]
        return float(lo + rng.random() * (hi - lo))

    def map_atoms(self, atom_idx: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Vectorized map over atom indices with pre-drawn uniforms."""
        lo = self.q_lo[atom_idx]
        return lo + u * (self.q_hi[atom_idx] - lo)


def _intervals_from_key(key: np.ndarray, weights: np.ndarray):
    """Cumulative-mass interval per atom, grouping equal keys.

    Atoms are ordered by ascending key (stronger atoms first by convention
    of the callers); equal-key atoms share one interval, so resampling
    within it preserves exact uniformity.
    """
    order = np.argsort(key, kind="stable")
    lo = np.empty(key.size)
    hi = np.empty(key.size)
    cum = 0.0
    i = 0
    while i < key.size:
        j = i
        mass = 0.0
        while j < key.size and key[order[j]] == key[order[i]]:
            mass += weights[order[j]]
            j += 1
        for k in order[i:j]:
            lo[k], hi[k] = cum, cum + mass
        cum += mass
        i = j
    return lo, hi


def choice_tables(curve: RevenueCurve, prior: ValuationPrior, p, beta):
    """Chosen allocation and payment at every grid menu.

    Returns chi (G+1, M, T) and mu (G+1, M): each atom's chosen lottery and
    its expected payment under every menu along the curve.
    """
    G = curve.grid.size
    p = np.asarray(p, dtype=float)
    chi = np.empty((G, prior.n_atoms, p.size))
    mu = np.empty((G, prior.n_atoms))
    for g, menu in enumerate(curve.menus):
        idx = choice_indices(menu, prior.atoms, p, beta)
        chi[g] = menu.alloc_matrix()[idx]
        mu[g] = menu.payments()[idx]
    return chi, mu


def _chosen_alloc(curve: RevenueCurve, prior: ValuationPrior, p, beta, t: int):
    """chi_t of each atom's chosen item at every grid menu: (G+1, M)."""
    out = np.empty((curve.grid.size, prior.n_atoms))
    for g, menu in enumerate(curve.menus):
        idx = choice_indices(menu, prior.atoms, p, beta)
        out[g] = menu.alloc_matrix()[idx, t]
    return out


def build_nested_mapper(curve: RevenueCurve, prior: ValuationPrior, p, beta,
                        t: int, chi=None) -> QuantileMapper:
    """Deterministic-menu construction (smallest grid q granting type t).

    Atoms never granted type t with probability 1 sit at the top interval
    (quantile near 1); ties and flat regions resolve by mass resampling.
    """
    if chi is None:
        chi = _chosen_alloc(curve, prior, p, beta, t)
    fractional = (chi > 1e-9) & (chi < 1 - 1e-9)
    if fractional.any():
        raise NonDeterministicMenuError(
            "grid menus allocate fractionally; use build_interim_mapper")
    won = chi > 0.5  # (G+1, M)
    first = np.where(won.any(axis=0), np.argmax(won, axis=0), curve.grid.size - 1)
    threshold_q = curve.grid[first]
    threshold_q[~won.any(axis=0)] = 1.0
    lo, hi = _intervals_from_key(threshold_q, prior.weights)
    w = np.asarray(p, dtype=float) * np.asarray(beta, dtype=float)
    return QuantileMapper("nested", prior.atoms, w, lo, hi, -threshold_q)


def estimate_x_mr(curves: dict, gammas, a, grid: np.ndarray,
                  mc_samples: int = 10_000, rng=None,
                  noise_sigma_flag: float = 3.0,
                  alpha=None) -> np.ndarray:
    """Monte-Carlo estimate of x^MR_a(q): expected slot share at quantile q.

    With a single slot this is the probability that a's marginal revenue
    tops every rival's; with several slots each rank r below the number of
    rivals beating a earns the slot weight alpha_r (top slot normalized to
    1), so x is the expected alpha of the slot won. Uses one shared set of
    opponent quantile draws across all grid points (common random numbers),
    then isotonic projection with exact endpoints x(0)=1, x(1)=0.
    """
    rng = np.random.default_rng(rng)
    alpha = np.array([1.0]) if alpha is None else np.asarray(alpha, dtype=float)
    others = [j for j in curves if j != a]
    if others:
        u = rng.random((mc_samples, len(others)))
        opp = np.stack(
            [gammas[j] * curves[j].marginal_many(u[:, i])
             for i, j in enumerate(others)], axis=1)
    else:
        opp = np.zeros((mc_samples, 0))
    own = gammas[a] * curves[a].marginal_many(grid)
    # rank r = number of rivals with strictly higher positive MR; a with
    # positive MR at rank r < S takes slot r and earns weight alpha_r
    beaten_by = (opp[None, :, :] > own[:, None, None]).sum(axis=2)
    weights = np.append(alpha, 0.0)  # rank >= S earns nothing
    x = np.where(own[:, None] > 0,
                 weights[np.minimum(beaten_by, alpha.size)], 0.0).mean(axis=1)
    # raw estimates are non-increasing by construction under shared draws,
    # but project anyway and flag big violations
    viol = float(np.maximum(np.diff(x), 0.0).max(initial=0.0))
    sigma = 1.0 / np.sqrt(mc_samples)
    if viol > noise_sigma_flag * sigma:
        warnings.warn(f"x^MR monotonicity violation {viol:.4f} above noise",
                      RuntimeWarning)
    x = _isotonic_decreasing(x)
    x[0], x[-1] = 1.0, 0.0
    return x


def _isotonic_decreasing(y: np.ndarray) -> np.ndarray:
    """L2 projection onto non-increasing sequences (pool adjacent violators)."""
    y = np.asarray(y, dtype=float)
    vals = []
    counts = []
    for v in -y:  # project -y onto non-decreasing
        vals.append(float(v))
        counts.append(1)
        while len(vals) >= 2 and vals[-2] > vals[-1]:
            v2, c2 = vals.pop(), counts.pop()
            v1, c1 = vals.pop(), counts.pop()
            vals.append((v1 * c1 + v2 * c2) / (c1 + c2))
            counts.append(c1 + c2)
    out = np.repeat(vals, counts)
    return -out


def _interval_mean(grid: np.ndarray, y: np.ndarray, lo: np.ndarray,
                   hi: np.ndarray) -> np.ndarray:
    """Mean of the piecewise-linear function (grid, y) over each [lo, hi]."""
    seg = np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1])
                                           * np.diff(grid))])

    def cum(q):
        i = np.clip(np.searchsorted(grid, q, side="right") - 1, 0,
                    grid.size - 2)
        dq = q - grid[i]
        slope = (y[i + 1] - y[i]) / (grid[i + 1] - grid[i])
        return seg[i] + y[i] * dq + 0.5 * slope * dq * dq

    width = hi - lo
    point = np.interp(lo, grid, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        avg = (cum(hi) - cum(lo)) / np.where(width > 0, width, 1.0)
    return np.where(width > 0, avg, point)


def build_interim_mapper(curves: dict, env: AuctionEnvironment, a: int, t: int,
                         mc_samples: int = 10_000, rng=None,
                         tie_tol: float | None = None,
                         tables=None) -> QuantileMapper:
    """General construction via the interim marginal-rank allocation.

    The mechanism faced by a single advertiser is a mixture over caps q with
    density -dx^MR/dq; each atom's interim allocation of type t is the
    mixture average of its chosen chi_t across grid menus. Atoms are ranked
    by that allocation (higher allocation -> lower quantile) and resampled
    within tie groups. The payment per allocation of type t is the interim
    expected payment divided by the interim allocation, m(v)/x_at(v), which
    reproduces the mixture's expected transfer.
    """
    rng = np.random.default_rng(rng)
    curve = curves[a]
    prior = env.priors[a]
    p, beta = env.inventory.probs, env.ctr.type_effects
    gammas = env.ctr.advertiser_quality
    grid = curve.grid
    x_mr = estimate_x_mr(curves, gammas, a, grid, mc_samples, rng,
                         alpha=env.ctr.slot_effects)
    w_mix = np.maximum(-np.diff(x_mr), 0.0)  # mass on interval (q_{i-1}, q_i]
    if tables is None:
        tables = choice_tables(curve, prior, p, beta)
    chi, mu = tables
    # allocation while the cap sits in interval i: chi at the right endpoint
    x_at = w_mix @ chi[1:, :, t]
    m_vec = w_mix @ mu[1:]
    if tie_tol is None:
        tie_tol = 3.0 / np.sqrt(mc_samples)
    key = x_at
    if x_at.size > 1:
        gaps = np.diff(np.sort(x_at))
        small = gaps[(gaps > 0) & (gaps < tie_tol)]
        if small.size:
            warnings.warn(
                "interim allocations closer than MC noise; widening ties",
                RuntimeWarning)
            key = np.round(x_at / tie_tol) * tie_tol
    lo, hi = _intervals_from_key(-key, prior.weights)
    # the slot share an atom actually realizes is the average of x^MR over
    # its quantile interval; dividing the interim expected payment by that
    # share makes the expected charge come out to exactly m(v)
    x_hat = _interval_mean(grid, x_mr, lo, hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        charge = np.where(x_hat > 0, m_vec / np.where(x_hat > 0, x_hat, 1.0),
                          0.0)
    return QuantileMapper("interim", prior.atoms, p * beta, lo, hi, key,
                          x_alloc=x_hat, charge=charge)


def build_mapper(curves: dict, env: AuctionEnvironment, a: int, t: int,
                 mc_samples: int = 10_000, rng=None,
                 tables=None) -> QuantileMapper:
    """Nested construction when grid menus are deterministic, else interim."""
    try:
        chi_t = None if tables is None else tables[0][:, :, t]
        return build_nested_mapper(
            curves[a], env.priors[a], env.inventory.probs,
            env.ctr.type_effects, t, chi=chi_t)
    except NonDeterministicMenuError:
        return build_interim_mapper(curves, env, a, t, mc_samples, rng,
                                    tables=tables)
