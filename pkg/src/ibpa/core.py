"""Domain types for the auction environment.

Inventory distribution, multiplicative CTR model, finite valuation priors,
and information/disclosure partitions, plus the regime-coarsening transform
that re-expresses an environment at the granularity of information blocks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

PROB_TOL = 1e-12


class InvalidInputError(ValueError):
    """Raised on dimension mismatches or invariant violations."""


class RegimeError(ValueError):
    """Raised when an information/disclosure pair is infeasible."""


@dataclass(frozen=True)
class InventoryDistribution:
    """Probability distribution over inventory types."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", p)
        if p.ndim != 1 or p.size < 1:
            raise InvalidInputError("inventory probs must be a non-empty vector")
        if np.any(p < -PROB_TOL):
            raise InvalidInputError("inventory probs must be non-negative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise InvalidInputError(f"inventory probs sum to {p.sum()}, expected 1")

    @property
    def n_types(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class CtrModel:
    """Multiplicative CTR model: ctr(a, s, t) = slot * type * quality."""

    slot_effects: np.ndarray
    type_effects: np.ndarray
    advertiser_quality: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.slot_effects, dtype=float)
        b = np.asarray(self.type_effects, dtype=float)
        g = np.asarray(self.advertiser_quality, dtype=float)
        object.__setattr__(self, "slot_effects", a)
        object.__setattr__(self, "type_effects", b)
        object.__setattr__(self, "advertiser_quality", g)
        if a.size < 1 or np.any(a <= 0) or np.any(np.diff(a) > 1e-12):
            raise InvalidInputError("slot effects must be positive and non-increasing")
        if abs(a[0] - 1.0) > 1e-9:
            raise InvalidInputError("top slot effect must be normalized to 1")
        if np.any(b <= 0) or np.any(g <= 0):
            raise InvalidInputError("type effects and qualities must be positive")
        if b.max() * g.max() > 1.0 + 1e-9:
            raise InvalidInputError("CTR exceeds 1 for some (advertiser, slot, type)")

    @property
    def n_slots(self) -> int:
        return self.slot_effects.size

    def ctr(self, a: int, s: int, t: int) -> float:
        return float(
            self.slot_effects[s] * self.type_effects[t] * self.advertiser_quality[a]
        )


@dataclass(frozen=True)
class ValuationPrior:
    """Finite prior over per-type valuation vectors.

    Both the discrete-atom and the pre-sampled representations reduce to
    weighted atoms; a sampled prior is simply equal-weight atoms fixed at
    construction, so all downstream expectations are exact finite sums.
    """

    atoms: np.ndarray  # (M, T)
    weights: np.ndarray  # (M,)
    label: str = ""

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "atoms", v)
        object.__setattr__(self, "weights", w)
        if v.shape[0] != w.size:
            raise InvalidInputError("atom/weight length mismatch")
        if np.any(v < 0):
            raise InvalidInputError("valuations must be non-negative")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InvalidInputError("weights must be non-negative and sum to 1")

    @classmethod
    def discrete(cls, atoms, weights, label: str = "") -> "ValuationPrior":
        return cls(np.asarray(atoms, dtype=float), np.asarray(weights, dtype=float), label)

    @classmethod
    def from_samples(cls, draws, label: str = "") -> "ValuationPrior":
        draws = np.atleast_2d(np.asarray(draws, dtype=float))
        n = draws.shape[0]
        return cls(draws, np.full(n, 1.0 / n), label)

    @classmethod
    def from_sampler(cls, sampler, n: int, rng: np.random.Generator, label: str = "") -> "ValuationPrior":
        """Pre-sample a continuous prior at n draws (fixed thereafter)."""
        return cls.from_samples(np.asarray([sampler(rng) for _ in range(n)]), label)

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_types(self) -> int:
        return self.atoms.shape[1]


@dataclass(frozen=True)
class Partition:
    """Partition of the type set [T], stored as a block index per type."""

    block_of: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.block_of, dtype=int)
        object.__setattr__(self, "block_of", b)
        if b.ndim != 1 or b.size < 1:
            raise InvalidInputError("block_of must be a non-empty vector")
        labels = np.unique(b)
        if labels[0] != 0 or labels[-1] != labels.size - 1:
            raise InvalidInputError("block indices must be contiguous 0..B-1")

    @classmethod
    def from_blocks(cls, blocks, n_types: int | None = None) -> "Partition":
        size = sum(len(b) for b in blocks)
        n = size if n_types is None else n_types
        out = np.full(n, -1, dtype=int)
        for i, blk in enumerate(blocks):
            for t in blk:
                if out[t] != -1:
                    raise InvalidInputError(f"type {t} in two blocks")
                out[t] = i
        if np.any(out == -1):
            raise InvalidInputError("partition does not cover all types")
        return cls(out)

    @classmethod
    def full(cls, n_types: int) -> "Partition":
        return cls(np.arange(n_types))

    @classmethod
    def null(cls, n_types: int) -> "Partition":
        return cls(np.zeros(n_types, dtype=int))

    @property
    def n_types(self) -> int:
        return self.block_of.size

    @property
    def block_count(self) -> int:
        return int(self.block_of.max()) + 1

    def blocks(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.block_of == i) for i in range(self.block_count)]

    def is_full(self) -> bool:
        return self.block_count == self.n_types

    def is_null(self) -> bool:
        return self.block_count == 1


def is_refinement(p1: Partition, p2: Partition) -> bool:
    """True iff every block of p1 sits inside some block of p2 (p1 ⪰ p2)."""
    if p1.n_types != p2.n_types:
        raise InvalidInputError("partitions are over different type sets")
    for blk in p1.blocks():
        if np.unique(p2.block_of[blk]).size > 1:
            return False
    return True


@dataclass(frozen=True)
class Regime:
    """Feasible (information, disclosure) partition pair."""

    info: Partition
    disc: Partition

    def __post_init__(self):
        if not is_refinement(self.info, self.disc):
            raise RegimeError("information must be at least as granular as disclosure")

    @classmethod
    def full_null(cls, n_types: int) -> "Regime":
        return cls(Partition.full(n_types), Partition.null(n_types))

    @classmethod
    def of(cls, p: Partition) -> "Regime":
        return cls(p, p)


@dataclass(frozen=True)
class AuctionEnvironment:
    """Everything the publisher knows ex ante.

    `disclosure` is carried by coarsened environments: the disclosure
    partition re-expressed over the environment's (block) types.
    """

    inventory: InventoryDistribution
    ctr: CtrModel
    priors: tuple[ValuationPrior, ...]
    disclosure: Partition | None = None

    def __post_init__(self):
        object.__setattr__(self, "priors", tuple(self.priors))
        T = self.inventory.n_types
        if self.ctr.type_effects.size != T:
            raise InvalidInputError("type effects do not match inventory")
        if self.ctr.advertiser_quality.size != len(self.priors):
            raise InvalidInputError("qualities do not match advertiser count")
        for f in self.priors:
            if f.n_types != T:
                raise InvalidInputError("prior dimension does not match inventory")
        if self.disclosure is not None and self.disclosure.n_types != T:
            raise InvalidInputError("disclosure partition does not match inventory")

    @property
    def n_types(self) -> int:
        return self.inventory.n_types

    @property
    def n_slots(self) -> int:
        return self.ctr.n_slots

    @property
    def n_advertisers(self) -> int:
        return len(self.priors)


def coarsen_values(values: np.ndarray, probs: np.ndarray, beta: np.ndarray,
                   info: Partition) -> np.ndarray:
    """CTR-weighted block expectation of per-type values.

    values has trailing axis T; returns the same array with trailing axis
    replaced by block index. Weighting by p_t * beta_t preserves expected
    per-click utility under the coarsening.
    """
    values = np.asarray(values, dtype=float)
    w = probs * beta
    out = np.empty(values.shape[:-1] + (info.block_count,))
    for i, blk in enumerate(info.blocks()):
        wb = w[blk]
        out[..., i] = values[..., blk] @ (wb / wb.sum())
    return out


def coarsen_environment(env: AuctionEnvironment, regime: Regime) -> AuctionEnvironment:
    """Re-express an environment at the granularity of the info partition.

    Block probability sums the member types; block valuations and type
    effects are CTR-weighted expectations, so an advertiser's expected
    per-click utility for any allocation is preserved. The disclosure
    partition is carried along, re-indexed over blocks.
    """
    if env.n_types != regime.info.n_types:
        raise InvalidInputError("regime is over a different type set")
    info = regime.info
    p = env.inventory.probs
    beta = env.ctr.type_effects
    if np.array_equal(info.block_of, np.arange(env.n_types)):
        return replace(env, disclosure=regime.disc)

    blocks = info.blocks()
    p_blk = np.array([p[blk].sum() for blk in blocks])
    if np.any(p_blk <= 0):
        raise InvalidInputError("every information block needs positive probability")
    beta_blk = np.array([(p[blk] * beta[blk]).sum() / p[blk].sum() for blk in blocks])
    priors = tuple(
        ValuationPrior(coarsen_values(f.atoms, p, beta, info), f.weights, f.label)
        for f in env.priors
    )
    disc_blk = np.array([regime.disc.block_of[blk[0]] for blk in blocks])
    # re-index disclosure blocks contiguously
    _, disc_blk = np.unique(disc_blk, return_inverse=True)
    return AuctionEnvironment(
        inventory=InventoryDistribution(p_blk),
        ctr=CtrModel(env.ctr.slot_effects, beta_blk, env.ctr.advertiser_quality),
        priors=priors,
        disclosure=Partition(disc_blk),
    )


@dataclass(frozen=True)
class AuctionInstance:
    """One realized auction: inventory type plus each advertiser's draw."""

    type_index: int
    atom_indices: np.ndarray  # (A,)
    values: np.ndarray  # (A, T)
    seed: int | None = None


def sample_auction(env: AuctionEnvironment, rng) -> AuctionInstance:
    """Draw one auction instance; deterministic given the seed/state."""
    seed = rng if isinstance(rng, (int, np.integer)) else None
    gen = np.random.default_rng(rng) if seed is not None else rng
    t = int(gen.choice(env.n_types, p=env.inventory.probs))
    atoms = np.array(
        [gen.choice(f.n_atoms, p=f.weights) for f in env.priors], dtype=int
    )
    values = np.stack([f.atoms[k] for f, k in zip(env.priors, atoms)])
    return AuctionInstance(t, atoms, values, seed)


# ---------------------------------------------------------------------------
# environment file format (1-based type/block indices on disk)

def _prior_to_json(f: ValuationPrior) -> dict:
    return {"atoms": [{"v": row.tolist(), "weight": float(w)}
                      for row, w in zip(f.atoms, f.weights)]}


def _prior_from_json(obj: dict, label: str) -> ValuationPrior:
    if "atoms" in obj:
        atoms = np.array([a["v"] for a in obj["atoms"]], dtype=float)
        weights = np.array([a.get("weight", 1.0) for a in obj["atoms"]], dtype=float)
        return ValuationPrior(atoms, weights / weights.sum(), label)
    if "samples" in obj:
        return ValuationPrior.from_samples(np.array(obj["samples"], dtype=float), label)
    raise InvalidInputError("prior needs 'atoms' or 'samples'")


def environment_to_json(env: AuctionEnvironment, regime: Regime | None = None) -> dict:
    doc = {
        "inventory_probs": env.inventory.probs.tolist(),
        "slot_effects": env.ctr.slot_effects.tolist(),
        "type_effects": env.ctr.type_effects.tolist(),
        "advertisers": [
            {"gamma": float(g), "prior": _prior_to_json(f)}
            for g, f in zip(env.ctr.advertiser_quality, env.priors)
        ],
    }
    if regime is not None:
        doc["partitions"] = {
            "info": (regime.info.block_of + 1).tolist(),
            "disc": (regime.disc.block_of + 1).tolist(),
        }
    return doc


def environment_from_json(doc: dict) -> tuple[AuctionEnvironment, Regime]:
    probs = np.asarray(doc["inventory_probs"], dtype=float)
    T = probs.size
    ads = doc["advertisers"]
    env = AuctionEnvironment(
        inventory=InventoryDistribution(probs),
        ctr=CtrModel(
            np.asarray(doc["slot_effects"], dtype=float),
            np.asarray(doc.get("type_effects", np.ones(T)), dtype=float),
            np.asarray([a["gamma"] for a in ads], dtype=float),
        ),
        priors=tuple(
            _prior_from_json(a["prior"], a.get("label", f"adv{i}"))
            for i, a in enumerate(ads)
        ),
    )
    parts = doc.get("partitions")
    if parts is None:
        regime = Regime.full_null(T)
    else:
        regime = Regime(
            Partition(np.asarray(parts["info"], dtype=int) - 1),
            Partition(np.asarray(parts["disc"], dtype=int) - 1),
        )
    return env, regime


def load_environment(path) -> tuple[AuctionEnvironment, Regime]:
    with open(path) as f:
        return environment_from_json(json.load(f))


def save_environment(path, env: AuctionEnvironment, regime: Regime | None = None):
    with open(path, "w") as f:
        json.dump(environment_to_json(env, regime), f, indent=2)
