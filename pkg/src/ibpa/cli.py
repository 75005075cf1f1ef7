"""Command-line entry points.

estimate-ctr / estimate-values fit primitives from CSV logs; build-curves
caches revenue curves for an environment; simulate runs one mechanism
comparison; compare writes the report CSV (wide + long) and summary figures.
"""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np
import pandas as pd

from .core import load_environment
from .curves import build_curve, save_curves
from .estimation import estimate_slot_effects, estimate_valuation_priors
from .simulate import SimulationConfig, load_sim_config, run_comparison
from .solver import SolverConfig


@click.group()
def main():
    """Information-bundling position auctions: estimation and simulation."""


@main.command("estimate-ctr")
@click.option("--panel", required=True, type=click.Path(exists=True),
              help="CSV with advertiser,slot,day,impressions,clicks")
@click.option("--out", type=click.Path(), default=None,
              help="write JSON estimates here (default: stdout)")
def estimate_ctr(panel, out):
    """Estimate slot effects and advertiser qualities from a CTR panel."""
    df = pd.read_csv(panel)
    alpha, gamma, r2 = estimate_slot_effects(df)
    doc = {
        "slot_effects": alpha.tolist(),
        "advertiser_quality": {str(k): float(v) for k, v in gamma.items()},
        "r2": r2,
    }
    text = json.dumps(doc, indent=2)
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {out} (R^2 = {r2:.3f})")
    else:
        click.echo(text)


@main.command("estimate-values")
@click.option("--log", "log_path", required=True, type=click.Path(exists=True),
              help="CSV with auction_id,type,slot_count,advertiser,gamma,bid")
@click.option("--alpha", required=True,
              help="comma-separated slot effects, e.g. 1,0.5,0.25")
@click.option("--n-samples", default=2000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(),
              help="output JSON prior file")
def estimate_values(log_path, alpha, n_samples, seed, out):
    """Fit per-type Turnbull valuation CDFs and sample a prior file."""
    df = pd.read_csv(log_path)
    alpha_vec = np.array([float(x) for x in alpha.split(",")])
    fits, prior = estimate_valuation_priors(df, alpha_vec, n_samples, seed)
    doc = {
        "prior": {"samples": prior.atoms.tolist()},
        "turnbull": {
            str(t): {
                "intervals": f.intervals.tolist(),
                "mass": f.mass.tolist(),
                "converged": f.converged,
            } for t, f in fits.items()
        },
    }
    Path(out).write_text(json.dumps(doc))
    click.echo(f"wrote {out} ({len(fits)} types, {n_samples} samples)")


@main.command("build-curves")
@click.option("--env", "env_path", required=True, type=click.Path(exists=True))
@click.option("--class", "class_tag", default="full", show_default=True,
              type=click.Choice(["full", "binary", "additive"]))
@click.option("--grid", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def build_curves(env_path, class_tag, grid, seed, out):
    """Solve and cache the revenue curve of every advertiser."""
    env, _ = load_environment(env_path)
    cfg = SolverConfig(seed=seed)
    curves = {
        a: build_curve(f, env.inventory.probs, env.ctr.type_effects,
                       class_tag, grid, cfg)
        for a, f in enumerate(env.priors)
    }
    save_curves(out, curves)
    click.echo(f"wrote {out} ({len(curves)} curves, grid {grid})")


@main.command("simulate")
@click.option("--env", "env_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None,
              help="optional report CSV")
def simulate(env_path, config_path, out):
    """Run the configured mechanism comparison and print the report."""
    env, _ = load_environment(env_path)
    config = load_sim_config(config_path, env.n_types)
    report = run_comparison(env, config, verbose=True)
    frame = report.to_frame()
    click.echo(frame.to_string(index=False))
    if out:
        frame.to_csv(out, index=False)
        click.echo(f"wrote {out}")


@main.command("compare")
@click.option("--env", "env_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True))
@click.option("--baseline", default="gsp-fi-fd", show_default=True,
              help="baseline mechanism label (case-insensitive)")
@click.option("--out", required=True, type=click.Path(),
              help="report CSV; also writes *_long.csv and *.png figures")
def compare(env_path, config_path, baseline, out):
    """Compare mechanisms against a baseline: CSV tables plus figures."""
    env, _ = load_environment(env_path)
    config = load_sim_config(config_path, env.n_types)
    labels = [m.label for m in config.mechanisms]
    matches = [l for l in labels if l.lower() == baseline.lower()
               or l.lower().replace("^", "_") == baseline.lower()]
    if matches:
        config = SimulationConfig(
            n_auctions=config.n_auctions, mechanisms=config.mechanisms,
            seed=config.seed, grid_size=config.grid_size,
            mc_samples=config.mc_samples, solver=config.solver,
            baseline=matches[0])
    report = run_comparison(env, config, verbose=True)
    frame = report.to_frame()
    out = Path(out)
    frame.to_csv(out, index=False)
    long_path = out.with_name(out.stem + "_long.csv")
    report.to_long_frame().to_csv(long_path, index=False)
    fig_paths = render_report_figures(report, out.with_suffix(""))
    click.echo(frame.to_string(index=False))
    click.echo(f"wrote {out}, {long_path}, " + ", ".join(map(str, fig_paths)))


def render_report_figures(report, stem) -> list:
    """Bar charts (with MC error bars) per metric, one PNG per metric."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    stem = Path(stem)
    paths = []
    labels = [r["mechanism"] for r in report.rows]
    for metric in ("revenue", "adv_welfare", "total_welfare", "alloc_rate"):
        vals = [r[metric] for r in report.rows]
        errs = [r[f"stderr_{metric}"] for r in report.rows]
        fig, ax = plt.subplots(figsize=(1.5 + 1.2 * len(labels), 4))
        ax.bar(labels, vals, yerr=errs, capsize=4, color="#4878a8")
        ax.set_ylabel(metric.replace("_", " "))
        ax.set_title(f"{metric.replace('_', ' ')} by mechanism "
                     f"(n={report.n_auctions})")
        ax.tick_params(axis="x", rotation=30)
        fig.tight_layout()
        path = stem.parent / f"{stem.name}_{metric}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


if __name__ == "__main__":
    main()
