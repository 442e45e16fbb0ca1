import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from numpy.testing import assert_allclose

from hnnest.errors import NonFinite
from hnnest.numerics import (min_singular_value, pinv_apply, projector, rk4_stability_polynomial,
                             rk4_step, solve_spd)


def test_solve_spd_identity():
    assert_allclose(solve_spd(np.eye(2), np.array([[3.0], [4.0]])), [[3.0], [4.0]])


def test_solve_spd_diagonal_inverse():
    X = solve_spd(np.diag([4.0, 9.0]), np.eye(2))
    assert_allclose(X, np.diag([0.25, 1 / 9]), rtol=1e-14)


def test_solve_spd_singular_falls_back_to_ridge():
    M = np.ones((2, 2))
    B = np.ones((2, 1))
    X = solve_spd(M, B)
    assert np.all(np.isfinite(X))
    assert np.linalg.norm(M @ X - B) <= 1e-4
    # minimum-norm solution from a full SVD pseudo-inverse
    assert_allclose(X, np.linalg.pinv(M) @ B, atol=1e-6)


def test_solve_spd_rejects_nonfinite_and_asymmetric():
    with pytest.raises(NonFinite):
        solve_spd(np.array([[1.0, np.nan], [np.nan, 1.0]]), np.ones(2))
    with pytest.raises(ValueError):
        solve_spd(np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones(2))


def test_projector_axis_and_line():
    assert_allclose(projector(np.array([[1.0, 0.0]])), [[1, 0], [0, 0]])
    assert_allclose(projector(np.array([[1.0, 1.0]])), 0.5 * np.ones((2, 2)), atol=1e-15)


def test_projector_matches_svd_oracle(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((4, 2)))
    M = Q.T                              # orthonormal rows
    P = projector(M)
    U = np.linalg.svd(M.T, full_matrices=False)[0]
    assert_allclose(P, U @ U.T, atol=1e-10)
    assert_allclose(P @ P, P, atol=1e-10)
    assert_allclose(P, P.T, atol=1e-12)


@given(st.integers(1, 3), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_projector_properties(q, extra, seed):
    M = np.random.default_rng(seed).standard_normal((q, q + extra))
    # the SPD solve is only specified for well-conditioned Gram matrices
    assume(np.linalg.cond(M) < 1e3)
    P = projector(M)
    ev = np.linalg.eigvalsh(P)
    assert np.max(np.abs(P @ P - P)) < 1e-9
    assert np.max(np.abs(P - P.T)) < 1e-12
    assert ev.min() > -1e-10 and ev.max() < 1 + 1e-10
    assert abs(np.trace(P) - q) < 1e-8


def test_pinv_apply_is_minimum_norm(rng):
    M = rng.standard_normal((2, 5))
    y = rng.standard_normal(2)
    assert_allclose(pinv_apply(M, y), np.linalg.pinv(M) @ y, atol=1e-12)


def test_min_singular_value_cases(rng):
    assert min_singular_value(np.diag([3.0, 0.5])) == pytest.approx(0.5)
    assert min_singular_value(np.array([[1.0, 0.0], [1.0, 0.0]])) == pytest.approx(0.0, abs=1e-15)
    S = rng.standard_normal((6, 4))
    oracle = np.sqrt(np.linalg.eigvalsh(S.T @ S)[0])
    assert min_singular_value(S) == pytest.approx(oracle, abs=1e-8)


def test_rk4_constant_and_decay():
    assert_allclose(rk4_step(lambda t, y: 0 * y, np.array([1.0]), 0.0, 0.1), [1.0])
    # truncated exponential series for y' = -y, h = 0.1
    assert_allclose(rk4_step(lambda t, y: -y, np.array([1.0]), 0.0, 0.1), [0.9048375], atol=5e-8)
    assert rk4_stability_polynomial(-0.1) == pytest.approx(0.9048375, abs=5e-8)


def test_rk4_integrates_cosine_to_sine():
    h = 1e-3
    n = int(round(np.pi / 2 / h))
    h = np.pi / 2 / n
    y, t = np.array([0.0]), 0.0
    for _ in range(n):
        y = rk4_step(lambda s, _y: np.array([np.cos(s)]), y, t, h)
        t += h
    assert_allclose(y, [1.0], atol=1e-10)


def test_rk4_flags_nonfinite():
    with pytest.raises(NonFinite):
        rk4_step(lambda t, y: y * np.inf, np.array([1.0]), 0.0, 0.1)
    with pytest.raises(ValueError):
        rk4_step(lambda t, y: y, np.array([1.0]), 0.0, 0.0)
