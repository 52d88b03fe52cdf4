# SPDX-License-Identifier: Apache-2.0
#
# simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
# ------------------------------------------------------------------------

import math
import os
import subprocess

import numpy as np
import pytest

import simhaps

SMALL = {"elements_per_layer": 9, "num_layers": 2}


def test_defaults():
    cfg = simhaps.default_config()
    assert cfg["elements_per_layer"] == 25
    assert cfg["num_layers"] == 3
    assert cfg["num_users"] == 4
    assert simhaps.flops_estimate(25, 3, 4, 256) == 672304


def test_exponential_outage():
    assert simhaps.outage_gamma(1.0, 1.0, 1.0) == pytest.approx(1.0 - math.exp(-1.0))


def test_optimize_dominates_baselines():
    joint = simhaps.optimize(SMALL, seed=3)
    assert joint["converged"]
    assert joint["phases"].shape == (2, 9)
    assert np.all((joint["phases"] >= 0) & (joint["phases"] < 2 * np.pi))
    for scheme in ("Power-Opt", "Phase-Opt", "Non-Opt"):
        assert joint["ee"] >= simhaps.optimize(SMALL, seed=3, scheme=scheme)["ee"] - 1e-9
    again = simhaps.ee_objective(SMALL, 3, joint["power"], joint["phases"])
    assert again == pytest.approx(joint["ee"], rel=1e-12)


def test_sweep_rows():
    rows = simhaps.run_ee_sweep(SMALL, "L", [1, 2], trials=2, schemes=["Joint-AO", "Non-Opt"])
    ee = [r for r in rows if r["metric"] == "EE"]
    assert len(ee) == 4
    assert all(r["mean"] > 0 and r["trials"] == 2 for r in ee)


def test_outage_rows_are_probabilities():
    rows = simhaps.run_outage(dict(SMALL, outage_montecarlo_trials=2000))
    assert {r["metric"] for r in rows} == {"OP-gamma", "OP-SPA", "OP-MC"}
    assert all(0.0 <= r["mean"] <= 1.0 for r in rows)


def test_errors_map_to_exceptions():
    with pytest.raises(simhaps.ConfigError):
        simhaps.run_outage({"num_layer": 3})
    with pytest.raises(simhaps.InfeasibleError):
        simhaps.optimize(dict(SMALL, multicast_rate_threshold_bps_hz=1.5))


def test_train_and_evaluate(tmp_path):
    cfg = {"elements_per_layer": 4, "num_layers": 2, "num_users": 2, "num_antennas": 3, "hidden_width": 8,
           "train_samples": 40, "test_samples": 6, "batch_size": 20, "max_epochs": 3}
    model = tmp_path / "model.json"
    report = simhaps.train_network(cfg, model)
    assert report["epochs"] == len(report["loss_history"]) <= 3
    rows = simhaps.evaluate_network(cfg, model)
    assert any(r["metric"] == "EE-ratio-median" for r in rows)


@pytest.mark.skipif("SIMHAPS_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_header(tmp_path):
    out = tmp_path / "rows.csv"
    subprocess.run([os.environ["SIMHAPS_CLI"], "ee-sweep", "--set", "elements_per_layer=9", "--values", "1",
                    "--trials", "1", "--out", str(out)], check=True)
    assert out.read_text().splitlines()[0] == simhaps.CSV_HEADER
