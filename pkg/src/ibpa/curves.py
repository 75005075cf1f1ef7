"""Normalized revenue curves Phi_a(q).

build_curve solves the capped single-advertiser problem on a quantile grid,
monotonizes the values (running max) and takes the upper concave envelope,
which is attainable as a lottery between the menus at the envelope's
vertices. Marginal revenue Phi'(q) is the right derivative of the resulting
piecewise-linear curve.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError, ValuationPrior
from .menus import Menu, LotteryPricing, menu_from_json, menu_to_json, mix_items
from .solver import SolverConfig, solve_constrained

SLOPE_TOL = 1e-12


def upper_concave_envelope(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Indices of the upper concave hull vertices of (x, y), left to right."""
    hull = [0]
    for i in range(1, x.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # pop b if it lies (weakly) below chord a-i
            if (y[b] - y[a]) * (x[i] - x[a]) <= (y[i] - y[a]) * (x[b] - x[a]) + 1e-15:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull, dtype=int)


@dataclass(frozen=True)
class RevenueCurve:
    grid: np.ndarray  # quantiles, 0 = q_0 < ... < q_G = 1
    raw_values: np.ndarray  # solver output per grid point (after running max)
    values: np.ndarray  # concavified values on the grid
    menus: tuple[Menu, ...]  # solved menu per grid point
    concavified: bool = True
    class_tag: str = "full"
    warning: bool = False

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "raw_values", np.asarray(self.raw_values, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "menus", tuple(self.menus))
        if g[0] != 0.0 or g[-1] != 1.0 or np.any(np.diff(g) <= 0):
            raise InvalidInputError("grid must be strictly increasing from 0 to 1")
        if abs(self.values[0]) > 1e-9:
            raise InvalidInputError("Phi(0) must be 0")
        hull = upper_concave_envelope(g, self.values)
        object.__setattr__(self, "_hull", hull)
        slopes = np.diff(self.values[hull]) / np.diff(g[hull])
        object.__setattr__(self, "_slopes", slopes)

    @property
    def hull(self) -> np.ndarray:
        return self._hull

    @property
    def hull_slopes(self) -> np.ndarray:
        return self._slopes

    def value(self, q) -> np.ndarray:
        return np.interp(q, self.grid[self._hull], self.values[self._hull])

    def marginal(self, q: float) -> float:
        """Right derivative of the concavified curve; left slope at q=1."""
        if self._slopes.size == 0:
            return 0.0
        qs = self.grid[self._hull]
        seg = int(np.searchsorted(qs, q, side="right")) - 1
        seg = min(max(seg, 0), self._slopes.size - 1)
        return float(self._slopes[seg])

    def marginal_many(self, q: np.ndarray) -> np.ndarray:
        qs = self.grid[self._hull]
        seg = np.clip(np.searchsorted(qs, q, side="right") - 1,
                      0, max(self._slopes.size - 1, 0))
        if self._slopes.size == 0:
            return np.zeros(np.shape(q))
        return self._slopes[seg]

    @property
    def q_star(self) -> float:
        """Saturation threshold: Phi is flat beyond q_star."""
        pos = np.flatnonzero(self._slopes > SLOPE_TOL)
        if pos.size == 0:
            return 0.0
        return float(self.grid[self._hull][pos[-1] + 1])

    def inverse_marginal(self, target: float, at_least: float = 0.0) -> float:
        """Largest q with Phi'(q) >= target (right edge of the matching step).

        With target <= 0 this is q_star (the zero of the marginal). The
        result is clamped to at_least.
        """
        qs = self.grid[self._hull]
        if target <= SLOPE_TOL:
            return max(self.q_star, at_least)
        ok = np.flatnonzero(self._slopes >= target - 1e-12)
        if ok.size == 0:
            return at_least
        return max(float(qs[ok[-1] + 1]), at_least)

    def menu_mixture(self, q: float) -> tuple[int, int, float]:
        """Hull bracket of q: grid indices (lo, hi) and mixing weight lam.

        The menu offered at q is the lottery taking menu hi with probability
        lam and menu lo otherwise; beyond q_star the saturation menu is
        offered deterministically.
        """
        q = min(q, self.q_star) if self._slopes.size else 0.0
        hull = self._hull
        qs = self.grid[hull]
        j = int(np.searchsorted(qs, q, side="left"))
        if j == 0:
            return int(hull[0]), int(hull[0]), 0.0
        lo, hi = hull[j - 1], hull[j]
        lam = (q - qs[j - 1]) / (qs[j] - qs[j - 1])
        return int(lo), int(hi), float(lam)

    def item_at(self, q: float, choose) -> LotteryPricing:
        """Effective lottery pricing an advertiser obtains at cap q.

        `choose` maps a grid index to the advertiser's chosen item in that
        grid point's menu; the result mixes the two bracketing choices.
        """
        lo, hi, lam = self.menu_mixture(q)
        it_lo = choose(lo)
        if hi == lo or lam == 0.0:
            return it_lo
        return mix_items(it_lo, choose(hi), lam)


def build_curve(prior: ValuationPrior, p, beta, class_tag: str = "full",
                grid_size: int = 50, solver_cfg: SolverConfig | None = None,
                seed_menus_per_point=None) -> RevenueCurve:
    """Solve the capped problem on a uniform grid and concavify.

    Each grid point is warm-started from every previously solved point's
    menu (all feasible at larger caps); seed_menus_per_point optionally adds
    external warm starts (e.g. a coarser regime's or simpler class's optima).
    """
    cfg = solver_cfg or SolverConfig()
    if grid_size < 2:
        raise InvalidInputError("grid needs at least 2 points")
    grid = np.linspace(0.0, 1.0, grid_size + 1)
    values = np.zeros(grid.size)
    menus: list[Menu] = []
    carried: list[Menu] = []
    warn = False
    for i, q in enumerate(grid):
        seeds = list(carried)
        if seed_menus_per_point is not None:
            seeds.extend(seed_menus_per_point(i, q))
        res = solve_constrained(prior, p, beta, q, class_tag,
                                solver_cfg=cfg, seed_menus=seeds)
        warn = warn or not res.converged
        values[i] = res.stats.revenue
        menus.append(res.menu)
        carried.append(res.menu)
    # monotone step: a larger cap can always reuse a smaller cap's menu
    for i in range(1, grid.size):
        if values[i] < values[i - 1]:
            values[i] = values[i - 1]
            menus[i] = menus[i - 1]
    hull = upper_concave_envelope(grid, values)
    concave = np.interp(grid, grid[hull], values[hull])
    return RevenueCurve(grid, values, concave, tuple(menus),
                        class_tag=class_tag, warning=warn)


def scale_to_slot(curve: RevenueCurve, alpha_s: float, gamma_a: float) -> np.ndarray:
    """R_as(q) = alpha_s * gamma_a * Phi_a(q) on the grid; menus unchanged."""
    if alpha_s <= 0 or gamma_a <= 0:
        raise InvalidInputError("slot and quality multipliers must be positive")
    return alpha_s * gamma_a * curve.values


# ---------------------------------------------------------------------------
# curve cache

def curve_to_json(curve: RevenueCurve, advertiser=None) -> dict:
    return {
        "advertiser": advertiser,
        "class": curve.class_tag,
        "grid": curve.grid.tolist(),
        "raw_values": curve.raw_values.tolist(),
        "values": curve.values.tolist(),
        "menus": [menu_to_json(m) for m in curve.menus],
        "warning": curve.warning,
    }


def curve_from_json(doc: dict) -> RevenueCurve:
    return RevenueCurve(
        np.asarray(doc["grid"], dtype=float),
        np.asarray(doc.get("raw_values", doc["values"]), dtype=float),
        np.asarray(doc["values"], dtype=float),
        tuple(menu_from_json(m) for m in doc["menus"]),
        class_tag=doc.get("class", "full"),
        warning=doc.get("warning", False),
    )


def save_curves(path, curves: dict):
    with open(path, "w") as f:
        json.dump({str(k): curve_to_json(c, k) for k, c in curves.items()}, f)


def load_curves(path) -> dict:
    with open(path) as f:
        return {k: curve_from_json(v) for k, v in json.load(f).items()}
