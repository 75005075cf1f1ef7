"""Menus of lottery pricings and advertiser choice.

A menu item pairs an allocation-probability vector over inventory types with
a slot-normalized expected payment. The null item (no allocation, no payment)
is always available at index 0, so the advertiser's optimum is weakly
non-negative. All payments here are slot-normalized; the alpha*gamma factor
is applied at mechanism level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError, ValuationPrior

CHOICE_TOL = 1e-12


@dataclass(frozen=True)
class LotteryPricing:
    alloc: np.ndarray  # chi in [0,1]^T
    payment: float  # normalized mu

    def __post_init__(self):
        chi = np.asarray(self.alloc, dtype=float)
        object.__setattr__(self, "alloc", chi)
        object.__setattr__(self, "payment", float(self.payment))
        if np.any(chi < -1e-12) or np.any(chi > 1 + 1e-12):
            raise InvalidInputError("allocation probabilities must lie in [0,1]")

    @property
    def is_null(self) -> bool:
        return self.payment == 0.0 and not self.alloc.any()


def null_item(n_types: int) -> LotteryPricing:
    return LotteryPricing(np.zeros(n_types), 0.0)


@dataclass(frozen=True)
class Menu:
    """Menu of lottery pricings; items[0] is always the null lottery.

    For the additive class, the entry fee rho0 and per-type prices rho are
    kept alongside the explicit items, with mu(chi) = rho0 + sum p_t chi_t
    rho_t for every non-null item.
    """

    items: tuple[LotteryPricing, ...]
    class_tag: str = "full"
    rho0: float | None = None
    rho: np.ndarray | None = None

    def __post_init__(self):
        items = tuple(self.items)
        if not items or not items[0].is_null:
            items = (null_item(items[0].alloc.size if items else 1),) + items
        object.__setattr__(self, "items", items)
        if self.class_tag not in ("full", "binary", "additive"):
            raise InvalidInputError(f"unknown menu class {self.class_tag!r}")
        if self.class_tag in ("binary", "additive"):
            for it in items:
                frac = (it.alloc > 1e-9) & (it.alloc < 1 - 1e-9)
                if frac.any():
                    raise InvalidInputError("binary-class menu has fractional item")
        if self.rho is not None:
            object.__setattr__(self, "rho", np.asarray(self.rho, dtype=float))

    @property
    def n_types(self) -> int:
        return self.items[0].alloc.size

    @property
    def n_items(self) -> int:
        return len(self.items)

    def alloc_matrix(self) -> np.ndarray:
        return np.stack([it.alloc for it in self.items])

    def payments(self) -> np.ndarray:
        return np.array([it.payment for it in self.items])


@dataclass(frozen=True)
class MenuStats:
    choice_probs: np.ndarray  # xi_k per item
    alloc_prob: float  # ex-ante sum_k xi_k sum_t p_t chi_t
    revenue: float  # sum_k xi_k mu_k

    def __post_init__(self):
        xi = np.asarray(self.choice_probs, dtype=float)
        object.__setattr__(self, "choice_probs", xi)
        if np.any(xi < -1e-9) or abs(xi.sum() - 1.0) > 1e-9:
            raise InvalidInputError("choice probabilities must be a distribution")


def choice_indices(menu: Menu, values: np.ndarray, p, beta) -> np.ndarray:
    """Chosen item index for each valuation row (seller-favorable ties).

    Utility of item k is sum_t p_t beta_t v_t chi_t^k - mu_k. Ties within
    CHOICE_TOL are broken toward the highest payment, then the lowest index.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    w = values * (np.asarray(p, dtype=float) * np.asarray(beta, dtype=float))
    util = w @ menu.alloc_matrix().T - menu.payments()
    scale = max(1.0, float(np.abs(util).max(initial=0.0)))
    near = util >= util.max(axis=1, keepdims=True) - CHOICE_TOL * scale
    pay = np.where(near, menu.payments(), -np.inf)
    best_pay = pay.max(axis=1, keepdims=True)
    return np.argmax(near & (pay >= best_pay), axis=1)


def advertiser_choice(menu: Menu, v, p, beta) -> int:
    """Index of the utility-maximizing item for one valuation vector."""
    return int(choice_indices(menu, np.atleast_2d(v), p, beta)[0])


def menu_stats(menu: Menu, prior: ValuationPrior, p, beta) -> MenuStats:
    """Exact finite-sum choice probabilities, allocation probability, revenue."""
    idx = choice_indices(menu, prior.atoms, p, beta)
    xi = np.bincount(idx, weights=prior.weights, minlength=menu.n_items)
    p = np.asarray(p, dtype=float)
    alloc = float(xi @ (menu.alloc_matrix() @ p))
    revenue = float(xi @ menu.payments())
    return MenuStats(xi, alloc, revenue)


def collapse_to_top_slot(alloc_by_slot: np.ndarray, payments, slot_effects,
                         class_tag: str = "full") -> Menu:
    """Collapse a multi-slot lottery menu onto the top slot.

    alloc_by_slot has shape (K, S, T): per item, probability of getting each
    slot for each type. The collapsed item allocates only the top slot with
    chi_t = sum_s (alpha_s / alpha_1) chi_st; payments are unchanged, and the
    advertiser's expected utility is pointwise preserved.
    """
    chi = np.asarray(alloc_by_slot, dtype=float)
    if chi.ndim == 2:  # single item
        chi = chi[None]
    alpha = np.asarray(slot_effects, dtype=float)
    total = chi.sum(axis=1)
    if np.any(total > 1 + 1e-9):
        raise InvalidInputError("lottery assigns more than one slot to a type")
    collapsed = np.tensordot(chi, alpha / alpha[0], axes=([1], [0]))
    payments = np.atleast_1d(np.asarray(payments, dtype=float))
    items = [LotteryPricing(c, m) for c, m in zip(collapsed, payments)]
    return Menu(tuple(items), class_tag)


def best_bundle(rho0: float, rho, v, p) -> tuple[np.ndarray, float]:
    """Utility-maximizing binary bundle under additive pricing, in O(T).

    Charge for bundle sigma is rho0 + sum_{t in sigma} p_t rho_t; utility is
    sum_{t in sigma} p_t (v_t - rho_t) - rho0 (v already CTR-weighted by the
    caller when beta != 1). Types with large surplus p_t(v_t - rho_t) > rho0
    are always included, and then every type with v_t > rho_t joins them;
    with no large-surplus type, the {v_t > rho_t} bundle is tested against
    the null bundle. Returns (boolean bundle, utility).
    """
    rho = np.asarray(rho, dtype=float)
    v = np.asarray(v, dtype=float)
    p = np.asarray(p, dtype=float)
    surplus = p * (v - rho)
    large = surplus > rho0
    positive = v > rho
    if large.any():
        sigma = large | positive
        return sigma, float(surplus[sigma].sum() - rho0)
    utility = float(surplus[positive].sum() - rho0)
    if utility > 0:
        return positive, utility
    return np.zeros(v.size, dtype=bool), 0.0


def best_bundles(rho0: float, rho, values: np.ndarray, p):
    """Vectorized best_bundle over atom rows: (bundles, utilities, charges)."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    rho = np.asarray(rho, dtype=float)
    p = np.asarray(p, dtype=float)
    surplus = p * (values - rho)
    positive = values > rho
    util = (surplus * positive).sum(axis=1) - rho0
    take = (surplus > rho0).any(axis=1) | (util > 0)
    sigma = positive & take[:, None]
    util = np.where(take, util, 0.0)
    charge = np.where(take, rho0 + sigma @ (p * rho), 0.0)
    return sigma, util, charge


def additive_menu(rho0: float, rho, p, prior: ValuationPrior,
                  beta=None) -> Menu:
    """Materialize an additive-pricing menu as explicit lottery items.

    Items are the bundles actually chosen by some prior atom (plus null);
    leaving unchosen bundles out changes no atom's choice.
    """
    p = np.asarray(p, dtype=float)
    rho = np.asarray(rho, dtype=float)
    veff = prior.atoms if beta is None else prior.atoms * np.asarray(beta, dtype=float)
    sigma, _, charge = best_bundles(rho0, rho, veff, p)
    items = [null_item(p.size)]
    seen = set()
    for row, mu in zip(sigma, charge):
        key = row.tobytes()
        if row.any() and key not in seen:
            seen.add(key)
            items.append(LotteryPricing(row.astype(float), float(mu)))
    return Menu(tuple(items), "additive", rho0=float(rho0), rho=rho)


def mix_items(item_lo: LotteryPricing, item_hi: LotteryPricing,
              lam: float) -> LotteryPricing:
    """Convex combination of two lottery pricings (lottery between menus)."""
    return LotteryPricing(
        (1 - lam) * item_lo.alloc + lam * item_hi.alloc,
        (1 - lam) * item_lo.payment + lam * item_hi.payment,
    )


# ---------------------------------------------------------------------------
# serialization

def menu_to_json(menu: Menu) -> dict:
    doc = {
        "class": menu.class_tag,
        "items": [
            {"alloc": it.alloc.tolist(), "payment": it.payment}
            for it in menu.items
        ],
    }
    if menu.class_tag == "additive" and menu.rho is not None:
        doc["additive"] = {"rho0": menu.rho0, "rho": menu.rho.tolist()}
    return doc


def menu_from_json(doc: dict) -> Menu:
    items = tuple(
        LotteryPricing(np.asarray(it["alloc"], dtype=float), it["payment"])
        for it in doc["items"]
    )
    add = doc.get("additive") or {}
    return Menu(
        items,
        doc.get("class", "full"),
        rho0=add.get("rho0"),
        rho=np.asarray(add["rho"], dtype=float) if "rho" in add else None,
    )
