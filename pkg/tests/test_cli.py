import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from hnnest.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main


def test_missing_config_exits_with_config_code(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert main(["run"]) == EXIT_CONFIG


def test_bad_override_exits_with_config_code(tmp_path):
    assert main(["run", "--config", "fig4", "--horizon", "-1", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["run", "--config", "fig4", "--trials", "3", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_presets_listing(capsys):
    assert main(["presets"]) == EXIT_OK
    assert "tableI-S3" in capsys.readouterr().out.split()


def test_run_writes_trace_and_summary(tmp_path, capsys):
    rc = main(["run", "--config", "fig4", "--horizon", "0.005", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    with open(tmp_path / "trace.csv") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    for col in ("t", "CA-HNN.k1", "CA-HNN.energy", "CA-HNN.score", "CA-HNN.c", "PB-RLS.b2"):
        assert col in head
    assert len(rows) == 1 + 50
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["metrics"]["CA-HNN"]["viol_pct"] == 0.0
    assert "final estimate" in capsys.readouterr().out


def test_run_ls_hnn_energy_not_monotone(tmp_path):
    assert main(["run", "--config", "fig3", "--horizon", "2", "--out", str(tmp_path)]) == EXIT_OK
    data = np.genfromtxt(tmp_path / "trace.csv", delimiter=",", names=True)
    assert np.any(np.diff(data["LSHNNenergy"]) > 0)


def test_run_numeric_failure_exit_code(tmp_path, capsys):
    from hnnest.config import load_preset
    d = load_preset("fig2").to_dict()
    # a plant step far outside the RK4 stability region makes the truth model diverge
    d["h"] = 5.0
    d["emit_every"] = 1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(d))
    rc = main(["run", "--config", str(path), "--horizon", "10000", "--out", str(tmp_path)])
    assert rc == EXIT_NUMERIC
    assert "numerical failure" in capsys.readouterr().err


def test_montecarlo_outputs_and_determinism(tmp_path, capsys):
    args = ["montecarlo", "--config", "tableI-S1", "--trials", "2", "--horizon", "0.002",
            "--workers", "1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "CA-HNN" in out and "PB-RLS" in out
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    a = (tmp_path / "a" / "aggregate.json").read_bytes()
    assert a == (tmp_path / "b" / "aggregate.json").read_bytes()
    assert (tmp_path / "a" / "trial_001.csv").exists()
    rep = json.loads(a)
    assert set(rep["aggregate"]["estimators"]) == {"CA-HNN", "PB-RLS"}


def test_montecarlo_single_trial_has_zero_std(tmp_path):
    assert main(["montecarlo", "--config", "tableI-S2", "--trials", "1", "--horizon", "0.002",
                 "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "aggregate.json").read_text())
    for row in rep["aggregate"]["estimators"].values():
        assert row["final_mse"]["std"] == 0.0


def test_montecarlo_requires_scenario(tmp_path):
    assert main(["montecarlo", "--config", "fig4", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_tune_reports_step_bound(tmp_path, capsys):
    assert main(["tune", "--config", "fig4", "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "tune.json").read_text())
    assert rep["h_max"] == pytest.approx(1.96078e-5, rel=1e-4)
    assert "h_max" in capsys.readouterr().out


def test_tune_frequency_bound_and_zero_curvature(tmp_path, capsys):
    from hnnest.config import load_preset
    d = load_preset("fig4").to_dict()
    d["tune"] = {"gamma_des": 50.0, "eps": 0.1, "omega_max": 1.0}
    p = tmp_path / "t.json"
    p.write_text(json.dumps(d))
    assert main(["tune", "--config", str(p)]) == EXIT_OK
    assert "beta_for_frequency" in capsys.readouterr().out
    # the LS mapping adds no constraint curvature to a rank-2 regressor
    d["estimators"] = [{"type": "ls-hnn", "name": "LS", "options": {}}]
    p.write_text(json.dumps(d))
    assert main(["tune", "--config", str(p)]) == EXIT_OK
    assert "advisory: ZeroCurvature" in capsys.readouterr().out


def test_bode_csv(tmp_path, capsys):
    assert main(["bode", "--out", str(tmp_path)]) == EXIT_OK
    data = np.genfromtxt(tmp_path / "bode.csv", delimiter=",", names=True)
    assert data.dtype.names == ("omega", "magnitude", "phase_deg")
    peak = data["omega"][np.argmax(data["magnitude"])]
    assert peak == pytest.approx(0.46, abs=0.01)
    assert data["magnitude"][-1] < 1e-3


def test_bode_single_point(tmp_path):
    from hnnest.config import load_preset
    d = load_preset("fig6").to_dict()
    d["bode"] = {"omegas": [1.0]}
    p = tmp_path / "b.json"
    p.write_text(json.dumps(d))
    assert main(["bode", "--config", str(p), "--out", str(tmp_path)]) == EXIT_OK
    assert len((tmp_path / "bode.csv").read_text().splitlines()) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hnnest.cli", "presets"], capture_output=True,
                          text=True, check=False)
    assert proc.returncode == 0
    assert "fig4" in proc.stdout
