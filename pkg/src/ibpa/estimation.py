"""Primitive estimation from platform logs.

Slot/quality effects come from an impression-weighted two-way fixed-effects
regression on log CTRs with an isotonic monotonicity projection; Varian
envy-free conditions turn bids into interval-censored valuation brackets;
the Turnbull NPMLE (via EM) recovers a piecewise-uniform valuation CDF.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import optimize

from .core import InvalidInputError, ValuationPrior

PANEL_COLUMNS = ["advertiser", "slot", "day", "impressions", "clicks"]
LOG_COLUMNS = ["auction_id", "type", "slot_count", "advertiser", "gamma", "bid"]


class IdentifiabilityError(ValueError):
    """Raised when the panel design cannot separate slot and quality effects."""


@dataclass(frozen=True)
class IntervalObservation:
    """Half-open valuation bracket (L, U] with a sampling weight."""

    lower: float
    upper: float
    weight: float = 1.0

    def __post_init__(self):
        if self.lower < 0 or self.upper <= self.lower or self.weight < 0:
            raise InvalidInputError("need 0 <= L < U and weight >= 0")


@dataclass(frozen=True)
class IccSequence:
    icc: np.ndarray  # per slot boundary, monotone after monotonize_icc
    d: np.ndarray  # deviation weights in [0,1]

    def __post_init__(self):
        object.__setattr__(self, "icc", np.asarray(self.icc, dtype=float))
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float))


def _isotonic(y, weights, increasing=False):
    """Weighted pool-adjacent-violators; default non-increasing."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    sign = 1.0 if increasing else -1.0
    vals, wts, counts = [], [], []
    for v, wt in zip(sign * y, w):
        vals.append(float(v))
        wts.append(float(wt))
        counts.append(1)
        while len(vals) >= 2 and vals[-2] > vals[-1]:
            v2, w2, c2 = vals.pop(), wts.pop(), counts.pop()
            v1, w1, c1 = vals.pop(), wts.pop(), counts.pop()
            tw = w1 + w2
            vals.append((v1 * w1 + v2 * w2) / tw if tw > 0 else v1)
            wts.append(tw)
            counts.append(c1 + c2)
    return sign * np.repeat(vals, counts)


def estimate_slot_effects(panel: pd.DataFrame, zero_click_correction: float = 0.5):
    """Fit log y_asd = log alpha_s + log gamma_a + eps, alpha_1 = 1.

    Weighted least squares (impressions), then isotonic projection of
    log alpha onto the non-increasing cone. Zero-click rows get a continuity
    correction instead of being dropped. Returns (alpha, gamma, r2) with
    gamma indexed by the panel's advertiser labels.
    """
    df = panel.copy()
    missing = [c for c in PANEL_COLUMNS if c not in df.columns]
    if missing:
        raise InvalidInputError(f"panel missing columns {missing}")
    if (df["clicks"] > df["impressions"]).any():
        raise InvalidInputError("clicks exceed impressions in some rows")
    clicks = df["clicks"].to_numpy(dtype=float)
    clicks = np.where(clicks == 0, zero_click_correction, clicks)
    y = np.log(clicks / df["impressions"].to_numpy(dtype=float))
    w = df["impressions"].to_numpy(dtype=float)

    slots = np.sort(df["slot"].unique())
    ads = np.sort(df["advertiser"].unique())
    _check_connected(df, slots, ads)
    s_idx = pd.Categorical(df["slot"], categories=slots).codes
    a_idx = pd.Categorical(df["advertiser"], categories=ads).codes

    # design: slot dummies for slots 2.. (slot 1 is the reference) + all ads
    n, S, A = len(df), slots.size, ads.size
    X = np.zeros((n, S - 1 + A))
    rows = np.arange(n)
    nonref = s_idx > 0
    X[rows[nonref], s_idx[nonref] - 1] = 1.0
    X[rows, S - 1 + a_idx] = 1.0
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    log_alpha = np.concatenate([[0.0], coef[: S - 1]])
    log_gamma = coef[S - 1:]

    fitted = X @ coef
    ybar = np.average(y, weights=w)
    ss_res = np.average((y - fitted) ** 2, weights=w)
    ss_tot = np.average((y - ybar) ** 2, weights=w)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0

    slot_w = np.array([w[s_idx == s].sum() for s in range(S)])
    log_alpha = _isotonic(log_alpha, slot_w)
    log_alpha -= log_alpha[0]  # re-normalize after projection
    return np.exp(log_alpha), pd.Series(np.exp(log_gamma), index=ads), float(r2)


def _check_connected(df, slots, ads):
    """Slot/advertiser bipartite graph must be connected to identify effects."""
    parent = {("s", s): ("s", s) for s in slots}
    parent.update({("a", a): ("a", a) for a in ads})

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for s, a in zip(df["slot"], df["advertiser"]):
        ra, rb = find(("s", s)), find(("a", a))
        if ra != rb:
            parent[ra] = rb
    roots = {find(k) for k in parent}
    if len(roots) > 1:
        comps = {}
        for k in parent:
            comps.setdefault(find(k), []).append(k)
        raise IdentifiabilityError(
            f"panel design is disconnected: {sorted(map(sorted, comps.values()), key=len)}")


def compute_icc(gamma_bids, alpha) -> np.ndarray:
    """Raw incremental costs per click between adjacent slots.

    gamma_bids are the score values (gamma*b) in slot order; bids beyond the
    list and alpha beyond the last slot are treated as zero.
    """
    gb = np.asarray(gamma_bids, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    S = alpha.size
    a_ext = np.concatenate([alpha, [0.0]])
    gb_ext = np.concatenate([gb, np.zeros(max(S + 2 - gb.size, 0))])
    icc = np.empty(S)
    for s in range(S):
        da = a_ext[s] - a_ext[s + 1]
        if da <= 0:
            raise InvalidInputError(
                f"slot effects alpha[{s}] and alpha[{s + 1}] are not "
                "strictly decreasing")
        icc[s] = (gb_ext[s + 1] * a_ext[s] - gb_ext[s + 2] * a_ext[s + 1]) / da
    return icc


def monotonize_icc(raw, weights_for_isotonic=None) -> IccSequence:
    """Deviation-minimal reweighting d* making d_s * icc_s non-increasing.

    Solves min sum_s (1 - d_s^2) s.t. d in [0,1]^S and the weighted sequence
    monotone, warm-started at d = 1; falls back to isotonic regression on the
    raw sequence if the optimizer reports failure.
    """
    raw = np.asarray(raw, dtype=float)
    S = raw.size
    if S <= 1 or not np.any(np.diff(raw) > 1e-12):
        return IccSequence(raw, np.ones(S))

    def objective(d):
        return float(np.sum(1.0 - d ** 2))

    def grad(d):
        return -2.0 * d

    cons = [{
        "type": "ineq",
        "fun": (lambda d, i=i: d[i] * raw[i] - d[i + 1] * raw[i + 1]),
    } for i in range(S - 1)]
    res = optimize.minimize(
        objective, np.ones(S), jac=grad, method="SLSQP",
        bounds=[(0.0, 1.0)] * S, constraints=cons,
        options={"maxiter": 500, "ftol": 1e-12},
    )
    mono = res.x * raw
    ok = res.success and np.all(np.diff(mono) <= 1e-9 * max(1, np.abs(raw).max()))
    if not ok:
        warnings.warn("d* optimization infeasible; isotonic fallback",
                      RuntimeWarning)
        w = weights_for_isotonic if weights_for_isotonic is not None else np.ones(S)
        mono = _isotonic(raw, w)
        d = np.ones(S)
        return IccSequence(np.minimum.accumulate(mono), d)
    return IccSequence(mono, np.clip(res.x, 0.0, 1.0))


def valuation_bounds(icc: IccSequence, slot: int, gamma: float,
                     b_max: float) -> IntervalObservation:
    """Bracket (L, U] for the valuation of the slot-`slot` occupant (0-based).

    gamma*v lies between the monotone ICCs below and above the slot; the top
    slot's upper bound is set to 2*b_max and the bottom slot's lower bound
    to zero.
    """
    seq = icc.icc
    S = seq.size
    if not 0 <= slot < S:
        raise InvalidInputError("slot out of range")
    upper = 2.0 * b_max if slot == 0 else seq[slot - 1] / gamma
    lower = 0.0 if slot == S - 1 else seq[slot] / gamma
    lower = min(max(lower, 0.0), upper - 1e-12)
    return IntervalObservation(lower, upper)


@dataclass(frozen=True)
class TurnbullFit:
    intervals: np.ndarray  # (J, 2) innermost intervals (p_j, q_j]
    mass: np.ndarray  # (J,) NPMLE probability mass
    loglik: np.ndarray  # per-iteration log-likelihood (non-decreasing)
    converged: bool

    def cdf(self, x) -> np.ndarray:
        """Piecewise-uniform CDF: mass spreads uniformly within intervals."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for (p, q), m in zip(self.intervals, self.mass):
            out = out + m * np.clip((x - p) / (q - p), 0.0, 1.0)
        return out

    def sample(self, n: int, rng) -> np.ndarray:
        j = rng.choice(self.mass.size, size=n, p=self.mass / self.mass.sum())
        lo, hi = self.intervals[j, 0], self.intervals[j, 1]
        return lo + rng.random(n) * (hi - lo)


def turnbull_intervals(observations) -> np.ndarray:
    """Innermost (Turnbull) intervals (p, q]: p a left endpoint, q a right
    endpoint, with no other observation endpoint strictly inside."""
    lowers = np.unique([o.lower for o in observations])
    uppers = np.unique([o.upper for o in observations])
    out = []
    for p in lowers:
        qs = uppers[uppers > p]
        if qs.size == 0:
            continue
        q = qs.min()
        inner_l = lowers[(lowers > p) & (lowers < q)]
        if inner_l.size == 0:
            out.append((p, q))
    return np.asarray(out)


def turnbull_em(observations, tol: float = 1e-8,
                max_iter: int = 100_000) -> TurnbullFit:
    """Turnbull NPMLE for interval-censored data via EM.

    Mass lives only on the innermost intervals; each EM step reallocates an
    observation's weight across the intervals it covers in proportion to the
    current masses. The log-likelihood is non-decreasing by construction.
    """
    observations = list(observations)
    if not observations:
        raise InvalidInputError("need at least one observation")
    intervals = turnbull_intervals(observations)
    J = intervals.shape[0]
    L = np.array([o.lower for o in observations])
    U = np.array([o.upper for o in observations])
    w = np.array([o.weight for o in observations])
    # interval j is usable for observation i iff (p_j, q_j] subset (L_i, U_i]
    A = (L[:, None] <= intervals[None, :, 0]) & (intervals[None, :, 1] <= U[:, None])
    if not A.any(axis=1).all():
        raise InvalidInputError("an observation covers no innermost interval")
    m = np.full(J, 1.0 / J)
    lls = []
    converged = False
    for _ in range(int(max_iter)):
        probs = A @ m  # (n,) likelihood contribution per observation
        lls.append(float(w @ np.log(probs)))
        post = (A * m) / probs[:, None]  # E-step responsibilities
        m_new = (w @ post) / w.sum()
        if np.abs(m_new - m).max() < tol:
            m = m_new
            converged = True
            break
        m = m_new
    lls.append(float(w @ np.log(A @ m)))
    if not converged:
        warnings.warn("Turnbull EM hit max_iter before tolerance",
                      RuntimeWarning)
    return TurnbullFit(intervals, m, np.asarray(lls), converged)


# ---------------------------------------------------------------------------
# log-file pipeline

def intervals_from_log(log: pd.DataFrame, alpha) -> dict:
    """Per-type interval observations from an auction log.

    Each auction contributes one bracket per occupied slot: scores are
    ranked, ICCs computed and monotonized, and the slot occupant's valuation
    bracketed. Advertisers are pooled within an inventory type.
    """
    missing = [c for c in LOG_COLUMNS if c not in log.columns]
    if missing:
        raise InvalidInputError(f"auction log missing columns {missing}")
    alpha = np.asarray(alpha, dtype=float)
    out: dict[int, list[IntervalObservation]] = {}
    b_max = float((log["gamma"] * log["bid"]).max())
    for (_, t), grp in log.groupby(["auction_id", "type"]):
        grp = grp.sort_values(["gamma", "bid"], ascending=False, kind="stable")
        gb = (grp["gamma"] * grp["bid"]).to_numpy()
        gb = -np.sort(-gb)
        S = min(int(grp["slot_count"].iloc[0]), alpha.size)
        icc = monotonize_icc(compute_icc(gb, alpha[:S]))
        gammas = grp["gamma"].to_numpy()
        for s in range(min(S, gb.size)):
            obs = valuation_bounds(icc, s, float(gammas[s]), b_max)
            out.setdefault(int(t), []).append(obs)
    return out


def estimate_valuation_priors(log: pd.DataFrame, alpha, n_samples: int = 2000,
                              seed: int = 0) -> tuple[dict, ValuationPrior]:
    """Fit a Turnbull CDF per inventory type and sample a joint prior.

    Types are treated as independent (the log carries no within-advertiser
    joint observations), so the prior atoms are independent per-type draws.
    """
    per_type = intervals_from_log(log, alpha)
    fits = {t: turnbull_em(obs) for t, obs in sorted(per_type.items())}
    rng = np.random.default_rng(seed)
    cols = [fits[t].sample(n_samples, rng) for t in sorted(fits)]
    prior = ValuationPrior.from_samples(np.column_stack(cols))
    return fits, prior
