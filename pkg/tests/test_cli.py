"""CLI: estimation, curve caching, and the compare report with figures."""

import json

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from ibpa.cli import main
from ibpa.core import Regime, save_environment
from ibpa.curves import load_curves

from conftest import make_two_type_env


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def env_path(tmp_path):
    path = tmp_path / "env.json"
    save_environment(path, make_two_type_env(), Regime.full_null(2))
    return path


def test_estimate_ctr(runner, tmp_path):
    rows = []
    for ad, g in (("a", 0.9), ("b", 0.5)):
        for s, a in enumerate((1.0, 0.4)):
            rows.append({"advertiser": ad, "slot": s + 1, "day": 0,
                         "impressions": 1000, "clicks": a * g * 1000})
    panel = tmp_path / "panel.csv"
    pd.DataFrame(rows).to_csv(panel, index=False)
    out = tmp_path / "ctr.json"
    result = runner.invoke(main, ["estimate-ctr", "--panel", str(panel),
                                  "--out", str(out)])
    assert result.exit_code == 0, result.output
    doc = json.loads(out.read_text())
    assert np.allclose(doc["slot_effects"], [1.0, 0.4], atol=1e-9)
    assert doc["advertiser_quality"]["a"] == pytest.approx(0.9)
    # stdout mode
    result = runner.invoke(main, ["estimate-ctr", "--panel", str(panel)])
    assert result.exit_code == 0
    assert "slot_effects" in result.output


def test_estimate_values(runner, tmp_path):
    rng = np.random.default_rng(0)
    rows = []
    for i in range(60):
        for ad in range(3):
            rows.append({"auction_id": i, "type": 1, "slot_count": 2,
                         "advertiser": ad, "gamma": 1.0,
                         "bid": rng.uniform(0.2, 1.0)})
    log = tmp_path / "log.csv"
    pd.DataFrame(rows).to_csv(log, index=False)
    out = tmp_path / "prior.json"
    result = runner.invoke(main, [
        "estimate-values", "--log", str(log), "--alpha", "1,0.5",
        "--n-samples", "50", "--out", str(out)])
    assert result.exit_code == 0, result.output
    doc = json.loads(out.read_text())
    assert len(doc["prior"]["samples"]) == 50
    assert "1" in doc["turnbull"]


def test_build_curves(runner, env_path, tmp_path):
    out = tmp_path / "curves.json"
    result = runner.invoke(main, ["build-curves", "--env", str(env_path),
                                  "--grid", "6", "--out", str(out)])
    assert result.exit_code == 0, result.output
    curves = load_curves(out)
    assert set(curves) == {"0", "1", "2"}
    assert curves["0"].grid.size == 7


def sim_config(tmp_path, n=300):
    doc = {
        "n_auctions": n, "seed": 1, "grid": 8, "mc_samples": 500,
        "solver": {"seed": 0, "patience": 6},
        "mechanisms": [
            {"mechanism": "ibpa", "regime": "fi-nd"},
            {"mechanism": "gsp", "regime": "fi-fd"},
        ],
    }
    path = tmp_path / "sim.json"
    path.write_text(json.dumps(doc))
    return path


def test_simulate_command(runner, env_path, tmp_path):
    cfg = sim_config(tmp_path)
    out = tmp_path / "report.csv"
    result = runner.invoke(main, ["simulate", "--env", str(env_path),
                                  "--config", str(cfg), "--out", str(out)])
    assert result.exit_code == 0, result.output
    df = pd.read_csv(out)
    assert set(df.mechanism) == {"IBPA-FI-ND", "GSP-FI-FD"}


def test_compare_writes_tables_and_figures(runner, env_path, tmp_path):
    cfg = sim_config(tmp_path)
    out = tmp_path / "cmp.csv"
    result = runner.invoke(main, [
        "compare", "--env", str(env_path), "--config", str(cfg),
        "--baseline", "gsp-fi-fd", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert out.exists()
    assert (tmp_path / "cmp_long.csv").exists()
    for metric in ("revenue", "adv_welfare", "total_welfare", "alloc_rate"):
        assert (tmp_path / f"cmp_{metric}.png").stat().st_size > 0
    df = pd.read_csv(out)
    base = df[df.mechanism == "GSP-FI-FD"].iloc[0]
    assert base.d_revenue_pct == pytest.approx(0.0)


def test_missing_file_errors(runner, tmp_path):
    result = runner.invoke(main, ["simulate", "--env", "nope.json",
                                  "--config", "nope.json"])
    assert result.exit_code != 0
