"""Synthesis of the time-varying Hopfield weights ``T(t)`` and bias ``b(t)``.

Neuron layout is ``v = [theta (p) | d (m) | s (n_in)]``. The data part uses
the projector onto the row space of the regressor, the constraint part the
fixed lifted-constraint projector::

    T = blkdiag(-P_W, 0) - eta * P_A
    b = [W^+ w ; 0] + eta * b_ctr
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import LiftedConstraints
from .errors import DimMismatch, NotIdentifiable
from .numerics import solve_spd


@dataclass(frozen=True)
class RegressorSnapshot:
    """One step of regression data ``w = W theta (+ H d)``."""

    W: np.ndarray
    w: np.ndarray
    H: np.ndarray | None = None
    t: float = 0.0

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        if w.size != W.shape[0]:
            raise DimMismatch(f"W is {W.shape} but w has {w.size} entries")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "w", w)
        if self.H is not None:
            H = np.asarray(self.H, dtype=float).reshape(W.shape[0], -1)
            if H.shape[1] > W.shape[0]:
                raise DimMismatch("compensation channel has more columns than rows")
            object.__setattr__(self, "H", H)

    @property
    def W_aug(self) -> np.ndarray:
        return self.W if self.H is None else np.hstack([self.W, self.H])


@dataclass(frozen=True)
class HnnMapping:
    T: np.ndarray
    b: np.ndarray
    eta: float
    p: int
    m: int = 0

    @property
    def n(self) -> int:
        return self.b.size

    def gradient(self, v: np.ndarray) -> np.ndarray:
        """Gradient of the energy, ``-T v - b``."""
        return -(self.T @ v) - self.b


def _data_block(W: np.ndarray, w: np.ndarray):
    # projector and minimum-norm solution from one factorization of W W^T
    X = solve_spd(W @ W.T, np.column_stack([W, w]))
    P = W.T @ X[:, :-1]
    return 0.5 * (P + P.T), W.T @ X[:, -1]


def _assemble(P_data, b_data, lc: LiftedConstraints, eta: float) -> tuple[np.ndarray, np.ndarray]:
    n = lc.n
    k = P_data.shape[0]
    T = -eta * lc.P_A
    T[:k, :k] -= P_data
    b = eta * lc.b_ctr
    b[:k] += b_data
    return T, b


def build_mapping(snap: RegressorSnapshot, lc: LiftedConstraints, eta: float) -> HnnMapping:
    """Constraint-aware mapping on ``v = [theta | s]``."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    if snap.W.shape[1] != lc.p or lc.m != 0:
        raise DimMismatch(f"regressor has {snap.W.shape[1]} columns, constraints expect p={lc.p}, m=0")
    P_W, b_ee = _data_block(snap.W, snap.w)
    T, b = _assemble(P_W, b_ee, lc, eta)
    return HnnMapping(T=T, b=b, eta=eta, p=lc.p, m=0)


def build_augmented_mapping(snap: RegressorSnapshot, lc_aug: LiftedConstraints,
                            eta: float) -> HnnMapping:
    """Compensation-augmented mapping on ``v = [theta | d | s]`` using ``[W H]``."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    if snap.H is None:
        raise DimMismatch("augmented mapping needs a compensation channel H")
    Wa = snap.W_aug
    if snap.W.shape[1] != lc_aug.p or snap.H.shape[1] != lc_aug.m:
        raise DimMismatch(f"[W H] is {Wa.shape}, constraints expect p={lc_aug.p}, m={lc_aug.m}")
    P_WH, b_ee = _data_block(Wa, snap.w)
    T, b = _assemble(P_WH, b_ee, lc_aug, eta)
    return HnnMapping(T=T, b=b, eta=eta, p=lc_aug.p, m=lc_aug.m)


def build_ls_mapping(snap: RegressorSnapshot) -> HnnMapping:
    """Classical least-squares mapping ``T = -W^T W``, ``b = W^T w`` (no constraints)."""
    W = snap.W
    return HnnMapping(T=-(W.T @ W), b=W.T @ snap.w, eta=0.0, p=W.shape[1])


def instantaneous_target(mapping: HnnMapping) -> np.ndarray:
    """Equilibrium ``v*`` with ``T v* + b = 0``.

    Raises :class:`NotIdentifiable` when ``-T`` is not positive definite,
    which is always the case for an under-determined snapshot whose null
    directions are not fixed by equality constraints.
    """
    M = -mapping.T
    M = 0.5 * (M + M.T)
    if np.linalg.eigvalsh(M)[0] < 1e-10:
        raise NotIdentifiable("-T is not positive definite")
    return solve_spd(M, mapping.b)


def energy(v: np.ndarray, mapping: HnnMapping) -> float:
    """``E(v) = -1/2 v^T T v - v^T b + 1/2 ||b||^2``."""
    v = np.asarray(v, dtype=float)
    if v.size != mapping.n:
        raise DimMismatch(f"state has {v.size} entries, mapping has {mapping.n}")
    return float(-0.5 * v @ mapping.T @ v - v @ mapping.b + 0.5 * mapping.b @ mapping.b)
