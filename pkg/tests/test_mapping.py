import numpy as np
import pytest
from numpy.testing import assert_allclose

from hnnest.constraints import BENCHMARK_BOX, embed_augmented, from_box, lift, unconstrained
from hnnest.errors import DimMismatch, NotIdentifiable
from hnnest.mapping import (RegressorSnapshot, build_augmented_mapping, build_ls_mapping,
                            build_mapping, energy, instantaneous_target)
from hnnest.plant import H_DIST, MsdParams, regressor_matrix

THETA_TRUE = MsdParams().theta


def msd_snapshot(x=(0.1, 0.4, -0.3, 0.2), with_H=False):
    W = regressor_matrix(x)
    return RegressorSnapshot(W=W, w=W @ THETA_TRUE, H=H_DIST if with_H else None)


def test_scalar_unconstrained_mapping():
    m = build_mapping(RegressorSnapshot(W=[[2.0]], w=[4.0]), unconstrained(1), eta=1.0)
    assert_allclose(m.T, [[-1.0]])
    assert_allclose(m.b, [2.0])
    assert_allclose(instantaneous_target(m), [2.0])


def test_orthonormal_regressor_mapping():
    m = build_mapping(RegressorSnapshot(W=np.eye(2), w=[3.0, 5.0]), unconstrained(2), eta=1.0)
    assert_allclose(m.T, -np.eye(2), atol=1e-14)
    assert_allclose(m.b, [3.0, 5.0], atol=1e-14)
    assert_allclose(instantaneous_target(m), [3.0, 5.0])


def test_msd_mapping_stiffness_bound():
    eta = 50.0
    m = build_mapping(msd_snapshot(), lift(from_box(BENCHMARK_BOX)), eta)
    lam = np.linalg.eigvalsh(-m.T)
    assert lam.max() <= 1 + eta + 1e-9
    assert lam.min() >= -1e-9
    assert_allclose(m.T, m.T.T, atol=1e-12)


def test_augmented_zero_channel_pads_projector():
    lc = lift(from_box(BENCHMARK_BOX))
    snap = msd_snapshot()
    plain = build_mapping(snap, lc, 50.0)
    aug = build_augmented_mapping(RegressorSnapshot(snap.W, snap.w, H=np.zeros((2, 1))),
                                  embed_augmented(lc, 1), 50.0)
    assert aug.T.shape == (13, 13)
    assert_allclose(aug.T[:4, :4], plain.T[:4, :4], atol=1e-12)
    assert_allclose(aug.T[4, :], 0.0, atol=1e-12)


def test_augmented_regressor_has_disturbance_column():
    snap = msd_snapshot(with_H=True)
    assert snap.W_aug.shape == (2, 5)
    assert_allclose(snap.W_aug[:, 4], [0.0, 1.0])


def test_augmented_curvature_positive_on_excited_data():
    lc = embed_augmented(lift(from_box(BENCHMARK_BOX)), 1)
    snap = msd_snapshot(with_H=True)
    Wa = snap.W_aug
    stack = np.vstack([Wa, np.hstack([lc.A_theta, np.zeros((lc.r, 1))])])
    assert np.linalg.matrix_rank(stack) == 5
    P = Wa.T @ np.linalg.solve(Wa @ Wa.T, Wa)
    assert np.linalg.eigvalsh(P + 50.0 * lc.P_A_theta_aug)[0] > 0


def test_target_recovers_truth_with_equalities():
    # equalities pinning the two directions the regressor cannot see
    from hnnest.constraints import ConstraintSet
    snap = msd_snapshot()
    N = np.linalg.svd(snap.W)[2][2:]
    cs = ConstraintSet(p=4, A_eq=N, a_eq=N @ THETA_TRUE)
    m = build_mapping(snap, lift(cs), eta=10.0)
    assert_allclose(instantaneous_target(m)[:4], THETA_TRUE, atol=1e-6)


def test_target_rejects_underdetermined_snapshot():
    m = build_mapping(msd_snapshot(), unconstrained(4), eta=1.0)
    with pytest.raises(NotIdentifiable):
        instantaneous_target(m)


def test_ls_mapping():
    W = np.array([[1.0, 2.0], [0.0, 1.0]])
    m = build_ls_mapping(RegressorSnapshot(W, W @ [1.0, -1.0]))
    assert_allclose(m.T, -W.T @ W)
    assert_allclose(instantaneous_target(m), [1.0, -1.0], atol=1e-12)


def test_energy_values():
    rng = np.random.default_rng(3)
    b = rng.standard_normal(3)
    from hnnest.mapping import HnnMapping
    m = HnnMapping(T=-np.eye(3), b=b, eta=0.0, p=3)
    assert energy(np.zeros(3), m) == pytest.approx(0.5 * b @ b)
    assert energy(b, m) == pytest.approx(0.0, abs=1e-14)
    v = rng.standard_normal(3)
    assert_allclose(m.gradient(v), v - b)
    with pytest.raises(DimMismatch):
        energy(np.zeros(2), m)


def test_snapshot_validation():
    with pytest.raises(DimMismatch):
        RegressorSnapshot(W=np.ones((2, 3)), w=np.ones(3))
    with pytest.raises(DimMismatch):
        build_mapping(msd_snapshot(), unconstrained(3), 1.0)
    with pytest.raises(ValueError):
        build_mapping(msd_snapshot(), unconstrained(4), 0.0)
