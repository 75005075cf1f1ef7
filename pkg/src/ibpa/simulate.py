"""Counterfactual comparison harness.

Draws one shared instance stream (common random numbers), runs each
configured mechanism/regime on it, and aggregates revenue, advertiser
welfare, total welfare, and allocation rate with Monte-Carlo standard
errors and deltas against a baseline mechanism.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .core import (
    AuctionEnvironment, AuctionInstance, InvalidInputError, Partition, Regime,
)
from .gsp import GspConfig, run_gsp
from .mechanism import build_ibpa_artifacts, run_ibpa
from .solver import SolverConfig

MECHANISM_CLASSES = {"ibpa": "full", "ibpa_bin": "binary", "ibpa_add": "additive"}


def parse_regime(spec, n_types: int) -> Regime:
    """Regime from 'fi-fd' | 'fi-nd' | 'ni-nd' or explicit block arrays."""
    if isinstance(spec, Regime):
        return spec
    if isinstance(spec, str):
        try:
            info_s, disc_s = spec.lower().split("-")
        except ValueError:
            raise InvalidInputError(f"bad regime spec {spec!r}")
        parts = {"fi": Partition.full(n_types), "ni": Partition.null(n_types),
                 "fd": None, "nd": Partition.null(n_types)}
        if info_s not in ("fi", "ni") or disc_s not in ("fd", "nd"):
            raise InvalidInputError(f"bad regime spec {spec!r}")
        info = parts[info_s]
        disc = info if disc_s == "fd" else Partition.null(n_types)
        return Regime(info, disc)
    info = Partition(np.asarray(spec["info"], dtype=int) - 1)
    disc = Partition(np.asarray(spec["disc"], dtype=int) - 1)
    return Regime(info, disc)


def regime_label(regime: Regime) -> str:
    def short(p: Partition) -> str:
        if p.is_full():
            return "F"
        if p.is_null():
            return "N"
        return "P"
    return f"{short(regime.info)}I-{short(regime.disc)}D"


@dataclass(frozen=True)
class MechanismSpec:
    kind: str  # ibpa | ibpa_bin | ibpa_add | gsp
    regime: Regime
    equilibrium: str = "envy_free_upper"  # gsp only
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("gsp", *MECHANISM_CLASSES):
            raise InvalidInputError(f"unknown mechanism kind {self.kind!r}")
        if not self.label:
            base = {"ibpa": "IBPA", "ibpa_bin": "IBPA^bin",
                    "ibpa_add": "IBPA^add", "gsp": "GSP"}[self.kind]
            object.__setattr__(self, "label",
                               f"{base}-{regime_label(self.regime)}")


@dataclass(frozen=True)
class SimulationConfig:
    n_auctions: int = 100_000
    mechanisms: tuple = ()
    seed: int = 0
    grid_size: int = 50
    mc_samples: int = 10_000
    solver: SolverConfig = field(default_factory=SolverConfig)
    baseline: str = "GSP-FI-FD"

    def __post_init__(self):
        if self.n_auctions < 1:
            raise InvalidInputError("n_auctions must be at least 1")

    @classmethod
    def from_json(cls, doc: dict, n_types: int) -> "SimulationConfig":
        mechs = tuple(
            MechanismSpec(
                m["mechanism"],
                parse_regime(m.get("regime", "fi-fd"), n_types),
                m.get("equilibrium", "envy_free_upper"),
                m.get("label", ""),
            )
            for m in doc.get("mechanisms", [])
        )
        solver = SolverConfig(**doc.get("solver", {}))
        return cls(
            n_auctions=int(doc.get("n_auctions", 100_000)),
            mechanisms=mechs,
            seed=int(doc.get("seed", 0)),
            grid_size=int(doc.get("grid", 50)),
            mc_samples=int(doc.get("mc_samples", 10_000)),
            solver=solver,
            baseline=doc.get("baseline", "GSP-FI-FD"),
        )


def draw_instances(env: AuctionEnvironment, n: int, seed):
    """Shared instance stream at the finest type/atom granularity."""
    rng = np.random.default_rng(seed)
    types = rng.choice(env.n_types, size=n, p=env.inventory.probs)
    atoms = np.column_stack([
        rng.choice(f.n_atoms, size=n, p=f.weights) for f in env.priors
    ])
    return types, atoms


def _instance(env, types, atoms, i) -> AuctionInstance:
    values = np.stack([f.atoms[atoms[i, a]]
                       for a, f in enumerate(env.priors)])
    return AuctionInstance(int(types[i]), atoms[i], values)


def welfare_metrics(revenue: np.ndarray, adv_welfare: np.ndarray,
                    allocated: np.ndarray) -> dict:
    """Aggregate one mechanism's outcome stream into report metrics."""
    n = revenue.size
    total = revenue + adv_welfare

    def mean_se(x):
        return float(x.mean()), float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0

    rev, rev_se = mean_se(revenue)
    adv, adv_se = mean_se(adv_welfare)
    tot, tot_se = mean_se(total)
    rate, rate_se = mean_se(allocated.astype(float))
    return {
        "revenue": rev, "stderr_revenue": rev_se,
        "adv_welfare": adv, "stderr_adv_welfare": adv_se,
        "total_welfare": tot, "stderr_total_welfare": tot_se,
        "alloc_rate": rate, "stderr_alloc_rate": rate_se,
    }


@dataclass
class MetricsReport:
    rows: list  # one dict per mechanism, in config order
    baseline: str
    per_auction: dict  # label -> {"revenue": ..., "adv_welfare": ..., "allocated": ...}
    n_auctions: int

    def __post_init__(self):
        for r in self.rows:
            gap = abs(r["total_welfare"] - r["revenue"] - r["adv_welfare"])
            if gap > 1e-9:
                raise ValueError("total welfare must equal revenue + welfare")

    def row(self, label: str) -> dict:
        for r in self.rows:
            if r["mechanism"] == label:
                return r
        raise KeyError(label)

    def to_frame(self) -> pd.DataFrame:
        rows = [dict(r) for r in self.rows]
        base = next((r for r in rows if r["mechanism"] == self.baseline), None)
        for r in rows:
            if base is not None and base["revenue"] > 0:
                r["d_revenue_pct"] = 100 * (r["revenue"] / base["revenue"] - 1)
                r["d_adv_welfare_pct"] = (
                    100 * (r["adv_welfare"] / base["adv_welfare"] - 1)
                    if base["adv_welfare"] else np.nan)
                r["d_total_welfare_pct"] = (
                    100 * (r["total_welfare"] / base["total_welfare"] - 1)
                    if base["total_welfare"] else np.nan)
                r["d_alloc_rate_pp"] = 100 * (r["alloc_rate"] - base["alloc_rate"])
        return pd.DataFrame(rows)

    def to_long_frame(self) -> pd.DataFrame:
        metrics = ("revenue", "adv_welfare", "total_welfare", "alloc_rate")
        recs = []
        for r in self.rows:
            for m in metrics:
                recs.append({
                    "mechanism": r["mechanism"], "regime": r["regime"],
                    "metric": m, "value": r[m], "stderr": r[f"stderr_{m}"],
                })
        return pd.DataFrame(recs)

    def paired_gap(self, hi: str, lo: str, metric: str = "revenue"):
        """CRN paired difference mean and stderr between two mechanisms."""
        d = self.per_auction[hi][metric] - self.per_auction[lo][metric]
        return float(d.mean()), float(d.std(ddof=1) / np.sqrt(d.size))


def build_mechanism(env, spec: MechanismSpec, config: SimulationConfig,
                    seed_menus_fn=None):
    """Artifacts (IBPA kinds) or config (GSP) for one mechanism spec."""
    if spec.kind == "gsp":
        return GspConfig(spec.regime, equilibrium=spec.equilibrium)
    return build_ibpa_artifacts(
        env, spec.regime, MECHANISM_CLASSES[spec.kind],
        grid_size=config.grid_size, solver_cfg=config.solver,
        mc_samples=config.mc_samples, seed=config.seed,
        seed_menus_fn=seed_menus_fn,
    )


def run_mechanism(env, spec: MechanismSpec, built, types, atoms,
                  seed) -> dict:
    """Per-auction metric arrays for one mechanism on the shared stream."""
    n = types.size
    rng = np.random.default_rng(seed)
    revenue = np.empty(n)
    adv_w = np.empty(n)
    allocated = np.empty(n, dtype=bool)
    for i in range(n):
        inst = _instance(env, types, atoms, i)
        if spec.kind == "gsp":
            out = run_gsp(env, built, inst)
        else:
            out = run_ibpa(built, inst, rng)
        revenue[i] = out.revenue
        adv_w[i] = out.utilities.sum()
        allocated[i] = out.allocated
    return {"revenue": revenue, "adv_welfare": adv_w, "allocated": allocated}


def run_comparison(env: AuctionEnvironment, config: SimulationConfig,
                   verbose: bool = False) -> MetricsReport:
    """Build artifacts per mechanism and compare them on shared instances."""
    if not config.mechanisms:
        raise InvalidInputError("no mechanisms configured")
    types, atoms = draw_instances(env, config.n_auctions, config.seed)
    rows = []
    per_auction = {}
    for k, spec in enumerate(config.mechanisms):
        t0 = time.perf_counter()
        built = build_mechanism(env, spec, config)
        arrays = run_mechanism(env, spec, built, types, atoms,
                               seed=(config.seed, 1000 + k))
        per_auction[spec.label] = arrays
        row = {"mechanism": spec.label, "regime": regime_label(spec.regime)}
        row.update(welfare_metrics(arrays["revenue"], arrays["adv_welfare"],
                                   arrays["allocated"]))
        rows.append(row)
        if verbose:
            print(f"{spec.label}: revenue {row['revenue']:.4f} "
                  f"± {row['stderr_revenue']:.4f} "
                  f"({time.perf_counter() - t0:.1f}s)")
    return MetricsReport(rows, config.baseline, per_auction, config.n_auctions)


def load_sim_config(path, n_types: int) -> SimulationConfig:
    with open(path) as f:
        return SimulationConfig.from_json(json.load(f), n_types)
