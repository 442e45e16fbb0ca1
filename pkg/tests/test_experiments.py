import json
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from hnnest.config import load_preset
from hnnest.experiments import (AggregateStats, TrialResult, aggregate, box_of, format_table,
                                generate_trial, montecarlo_report, run_montecarlo, run_single,
                                run_trial, write_json, write_trace_csv)
from hnnest.metrics import MetricRecord


def _small(name, trials=3, horizon=None):
    cfg = load_preset(name)
    cfg.scenario.trials = trials
    if horizon is not None:
        cfg.horizon = horizon
    return cfg


def test_generate_trial_is_deterministic():
    cfg = _small("tableI-S2", trials=10)
    a, b = generate_trial(cfg, 4), generate_trial(cfg, 4)
    assert a.draws == b.draws
    assert_array_equal(a.theta0, b.theta0)
    ra = np.random.default_rng(a.noise_seed).standard_normal(5)
    rb = np.random.default_rng(b.noise_seed).standard_normal(5)
    assert_array_equal(ra, rb)
    assert generate_trial(cfg, 5).draws != a.draws
    with pytest.raises(IndexError):
        generate_trial(cfg, 10)


def test_s1_draws_inside_box():
    cfg = _small("tableI-S1", trials=10_000)
    box = box_of(cfg)
    th = np.array([generate_trial(cfg, i).theta0 for i in range(10_000)])
    assert np.all(th >= box.lower) and np.all(th <= box.upper)


def test_s2_draws_in_ranges():
    cfg = _small("tableI-S2", trials=200)
    d = [generate_trial(cfg, i).disturbance for i in range(200)]
    assert all(1 <= x.mu <= 5 and 1 <= x.sigma2 <= 10 and x.kind == "gaussian" for x in d)


def test_s3_omega_mean():
    cfg = _small("tableI-S3", trials=10_000)
    om = np.array([generate_trial(cfg, i).schedule.omega for i in range(10_000)])
    assert om.min() >= 0.01 and om.max() <= 1.0
    # uniform on [0.01, 1] has mean 0.505
    assert abs(om.mean() - 0.505) < 0.01


def test_paired_trial_shares_stream_and_order_does_not_matter():
    cfg = _small("tableI-S1", horizon=0.005)
    inp = generate_trial(cfg, 1)
    res = run_trial(cfg, inp)
    flipped = replace(cfg, estimators=list(reversed(cfg.estimators)))
    res2 = run_trial(flipped, generate_trial(flipped, 1))
    assert res.checksum == res2.checksum
    for name in res.metrics:
        assert res.metrics[name] == res2.metrics[name]


def test_run_single_constant_truth_converges():
    cfg = load_preset("fig4")
    cfg.estimators = cfg.estimators[:1]
    res = run_single(cfg, horizon=0.05)
    m = res.metrics["CA-HNN"]
    assert m.viol_pct == 0.0
    assert m.final_mse < 1e-3
    tr = res.traces["CA-HNN"]
    assert set(tr) >= {"k1", "b1", "k2", "b2", "d", "energy", "score", "regime", "c", "eta"}
    assert tr["k1"].size == res.t.size


def test_failures_are_captured_per_estimator():
    cfg = load_preset("fig4")
    cfg.h = 2e-3   # far beyond the step bound of the HNN gains
    res = run_single(cfg, horizon=0.2)
    assert "PB-RLS" not in res.failures
    assert res.metrics["PB-RLS"] is not None


def _rec(v):
    return MetricRecord(final_mse=v, auc_mse=2 * v, t5=v, t1=None, viol_pct=0.0)


def _result(i, v):
    return TrialResult(index=i, trial_seed=[0, i], draws={}, metrics={"A": _rec(v)}, failures={},
                       monitor={}, saturation={}, c_star={}, raw_viol_pct={}, checksum="")


def test_aggregate_population_std():
    stats = aggregate([_result(i, v) for i, v in enumerate([1.0, 2.0, 3.0])])
    row = stats.table["A"]
    assert row["final_mse"]["mean"] == pytest.approx(2.0)
    assert row["final_mse"]["std"] == pytest.approx(np.sqrt(2 / 3))
    assert row["t1"]["count"] == 0
    assert stats.to_dict()["std_convention"] == "population"


def test_aggregate_single_and_identical_trials():
    assert aggregate([_result(0, 0.5)]).table["A"]["final_mse"]["std"] == 0.0
    row = aggregate([_result(i, 0.5) for i in range(4)]).table["A"]["final_mse"]
    assert row == {"mean": 0.5, "std": 0.0, "count": 4}
    with pytest.raises(ValueError):
        aggregate([])


def test_format_table_dashes_for_unsettled():
    res = [_result(0, 1.0), _result(1, 2.0)]
    res[1].metrics["A"] = MetricRecord(final_mse=2.0, auc_mse=4.0, t5=None, t1=None, viol_pct=0.0)
    text = format_table(aggregate(res))
    line = text.splitlines()[1]
    assert line.startswith("A")
    assert line.count("--") == 2


def test_montecarlo_determinism_and_outputs(tmp_path):
    cfg = _small("tableI-S1", trials=2, horizon=0.002)
    a = run_montecarlo(cfg, workers=1, keep_traces=True)
    b = run_montecarlo(cfg, workers=2)
    ra = montecarlo_report(cfg, a, 0.002)
    rb = montecarlo_report(cfg, b, 0.002)
    write_json(tmp_path / "a.json", ra)
    write_json(tmp_path / "b.json", rb)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    loaded = json.loads((tmp_path / "a.json").read_text())
    assert loaded["aggregate"]["trials"] == 2
    write_trace_csv(tmp_path / "t.csv", a[0])
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].startswith("t,true.k1")
    assert len(lines) == 1 + a[0].t.size
    row = lines[1].split(",")
    assert float(row[1]) == 1.0


def test_csv_floats_round_trip(tmp_path):
    cfg = load_preset("fig8")
    res = run_single(cfg, horizon=0.001)
    write_trace_csv(tmp_path / "t.csv", res)
    data = np.genfromtxt(tmp_path / "t.csv", delimiter=",", names=True)
    assert_allclose(data["CA2HNNk2"], res.traces["CA2-HNN"]["k2"], rtol=0, atol=0)
