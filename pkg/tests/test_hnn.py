import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from hnnest.constraints import BENCHMARK_BOX, from_box, lift, unconstrained
from hnnest.errors import DimMismatch, SaturationViolation
from hnnest.hnn import (GainConfig, HnnEstimator, HnnState, activation, hnn_step,
                        inverse_activation, slope_matrix)
from hnnest.mapping import HnnMapping, RegressorSnapshot, build_mapping, energy
from hnnest.plant import MsdSimulator
from hnnest.traces import SnapshotChunk

THETA0 = np.array([0.25, 0.05, 0.3, 0.15])


def test_activation_values():
    assert activation(0.0, 10, 1) == 0.0
    assert abs(activation(1e3, 10, 1) - 10) < 1e-12
    assert activation(1.0, 10, 2) == pytest.approx(10 * math.tanh(1.0), abs=1e-9)
    assert activation(1.0, 10, 2) == pytest.approx(7.615941560, abs=1e-9)


@given(st.floats(-9.9, 9.9), st.floats(0.1, 500))
def test_inverse_activation_round_trip(v, beta):
    assert activation(inverse_activation(v, 10.0, beta), 10.0, beta) == pytest.approx(v, abs=1e-9)


def test_inverse_activation_clamps_at_the_bound():
    assert np.isfinite(inverse_activation(10.0, 10.0, 1.0))


def test_slope_matrix():
    assert_allclose(slope_matrix(np.zeros(2), 10.0), np.eye(2))
    assert_allclose(slope_matrix(np.array([5.0]), 10.0), [[0.75]])
    assert_allclose(slope_matrix(np.array([9.0]), 10.0), [[0.19]])
    with pytest.raises(SaturationViolation):
        slope_matrix(np.array([10.0]), 10.0)


def test_gain_config_validation():
    assert GainConfig(10, 250).kappa == 1250
    with pytest.raises(ValueError):
        GainConfig(alpha=-1)
    with pytest.raises(ValueError):
        GainConfig(integrator="midpoint")
    with pytest.warns(RuntimeWarning):
        assert not GainConfig(10, 250, 50, 1e-4).check_step(51.0)


def test_step_at_equilibrium_is_identity():
    g = GainConfig(10, 2, 1, 1e-2)
    s = HnnState.from_outputs(np.array([1.0, -2.0]), g, p=2)
    out = hnn_step(s, HnnMapping(T=np.zeros((2, 2)), b=np.zeros(2), eta=1, p=2), g)
    assert_allclose(out.u, s.u)


def test_scalar_step_moves_toward_target():
    g = GainConfig(10, 2, 1, 1e-2)
    m = HnnMapping(T=np.array([[-1.0]]), b=np.array([1.0]), eta=1, p=1)
    s = HnnState.from_outputs(np.zeros(1), g, p=1)
    vs = []
    for _ in range(200):
        s = hnn_step(s, m, g)
        vs.append(s.v[0])
    assert vs[0] > 0
    assert np.all(np.diff(vs) > 0) and vs[-1] < 1.0
    assert vs[-1] == pytest.approx(1.0, abs=1e-3)


def test_euler_integrator_matches_one_forward_step():
    g = GainConfig(10, 2, 1, 1e-3, integrator="euler")
    m = HnnMapping(T=np.array([[-1.0]]), b=np.array([1.0]), eta=1, p=1)
    s = HnnState.from_outputs(np.array([0.5]), g, p=1)
    out = hnn_step(s, m, g)
    assert_allclose(out.u, s.u + 1e-3 * (m.T @ s.v + m.b))


def test_energy_descends_on_frozen_mapping():
    rng = np.random.default_rng(7)
    g = GainConfig(10, 1, 50, 1e-3)
    W = rng.standard_normal((2, 4))
    m = build_mapping(RegressorSnapshot(W, W @ [1.0, 0.15, 0.5, 0.25]), lift(from_box(BENCHMARK_BOX)), 50.0)
    s = HnnState.from_outputs(np.concatenate([THETA0, np.zeros(8)]), g, p=4)
    E = [energy(s.v, m)]
    for _ in range(3000):
        s = hnn_step(s, m, g)
        E.append(energy(s.v, m))
    assert np.max(np.diff(E)) <= 1e-12
    assert E[-1] < E[0]


def test_output_dynamics_follow_chain_rule():
    rng = np.random.default_rng(1)
    g = GainConfig(10, 2, 1, 1e-6)
    T = -np.eye(3) + 0.1 * rng.standard_normal((3, 3))
    T = 0.5 * (T + T.T)
    m = HnnMapping(T=T, b=rng.standard_normal(3), eta=1, p=3)
    s = HnnState.from_outputs(rng.uniform(-5, 5, 3), g, p=3)
    dv = (hnn_step(s, m, g).v - s.v) / g.h
    predicted = g.kappa * slope_matrix(s.v, g.alpha) @ (T @ s.v + m.b)
    assert_allclose(dv, predicted, rtol=1e-4, atol=1e-6)


def _reference_run(chunk, gains, lc, theta0, K):
    s = HnnState.from_outputs(np.concatenate([theta0, np.zeros(lc.n_in)]), gains, p=lc.p)
    out = []
    for k in range(K):
        s = hnn_step(s, build_mapping(chunk.snapshot(k), lc, gains.eta), gains)
        out.append(s.theta.copy())
    return np.array(out)


@pytest.mark.parametrize("integrator", ["rk4", "euler"])
def test_compiled_loop_matches_reference(integrator):
    gains = GainConfig(10, 250, 50, 1e-5, integrator=integrator)
    chunk = next(MsdSimulator(h=1e-5).chunks(400))
    est = HnnEstimator(4, gains, THETA0, from_box(BENCHMARK_BOX), emit_every=1, diag_every=1000)
    est.process(chunk)
    ref = _reference_run(chunk, gains, lift(from_box(BENCHMARK_BOX)), THETA0, 400)
    assert_allclose(est.trace.arrays()["theta"], ref, rtol=1e-9, atol=1e-11)


def test_chunking_does_not_change_trace():
    gains = GainConfig(10, 250, 50, 1e-5)
    sim = MsdSimulator(h=1e-5)
    whole = next(sim.chunks(1000))
    a = HnnEstimator(4, gains, THETA0, from_box(BENCHMARK_BOX), emit_every=7, diag_every=50)
    a.process(whole)
    b = HnnEstimator(4, gains, THETA0, from_box(BENCHMARK_BOX), emit_every=7, diag_every=50)
    for lo in (0, 333, 700):
        hi = {0: 333, 333: 700, 700: 1000}[lo]
        b.process(SnapshotChunk(t=whole.t[lo:hi], W=whole.W[lo:hi], w=whole.w[lo:hi],
                                offset=lo, h=whole.h))
    ta, tb = a.trace.arrays(), b.trace.arrays()
    assert_allclose(ta["t"], tb["t"])
    assert_allclose(ta["theta"], tb["theta"], rtol=0, atol=0)
    assert_allclose(a.diag["c"], b.diag["c"])


def test_estimator_records_emission_grid_and_diagnostics():
    gains = GainConfig(10, 250, 50, 1e-5)
    est = HnnEstimator(4, gains, THETA0, from_box(BENCHMARK_BOX), emit_every=10, diag_every=100)
    est.process(next(MsdSimulator(h=1e-5).chunks(1000)))
    tr = est.trace.arrays()
    assert tr["t"].size == 100
    assert_allclose(tr["t"][:3], [0.0, 1e-4, 2e-4])
    assert len(est.diag["c"]) == 10
    assert 0 < est.c_star() <= 51
    assert est.n == 12
    sat = est.saturation_summary(1e-5)
    assert sat["saturated_count"] == 0


def test_output_box_clips_reported_estimate_only():
    gains = GainConfig(10, 250, 50, 1e-5)
    chunk = next(MsdSimulator(h=1e-5).chunks(2000))
    raw = HnnEstimator(4, gains, THETA0, from_box(BENCHMARK_BOX), emit_every=1)
    cut = HnnEstimator(4, gains, THETA0, from_box(BENCHMARK_BOX), emit_every=1, output_box=BENCHMARK_BOX)
    raw.process(chunk)
    cut.process(chunk)
    r, c = raw.trace.arrays()["theta"], cut.trace.arrays()["theta"]
    assert_allclose(c, BENCHMARK_BOX.clip(r))
    assert_allclose(raw.u, cut.u)
    over = np.maximum(r - BENCHMARK_BOX.upper, 0) + np.maximum(BENCHMARK_BOX.lower - r, 0)
    assert cut.raw_violation == pytest.approx(100 * np.max(over / BENCHMARK_BOX.width))


def test_unconstrained_ls_mode_and_dimension_checks():
    gains = GainConfig(6, 1, 1, 1e-4)
    est = HnnEstimator(4, gains, THETA0, mode="ls", name="LS-HNN")
    assert est.lc.r == 0
    with pytest.raises(DimMismatch):
        HnnEstimator(4, gains, THETA0[:3])
    with pytest.raises(ValueError):
        HnnEstimator(4, gains, THETA0, mode="other")
