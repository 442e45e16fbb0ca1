"""Small dense linear-algebra helpers and a fixed-step RK4 integrator."""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.linalg as la

from .errors import NonFinite, SingularAfterRidge

RIDGE_SCALE = 1e-8
POWER_ITERATIONS = 20


def _check_finite(*arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFinite("input contains NaN or Inf")


def spectral_norm_estimate(M: np.ndarray, iterations: int = POWER_ITERATIONS) -> float:
    """Power-iteration estimate of the 2-norm of a symmetric PSD matrix."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if n == 0:
        return 0.0
    x = np.ones(n) / np.sqrt(n)
    lam = 0.0
    for _ in range(iterations):
        y = M @ x
        lam = float(np.linalg.norm(y))
        if lam == 0.0:
            # ones vector may sit in the null space; fall back to a cheap bound
            return float(np.max(np.abs(M).sum(axis=1)))
        x = y / lam
    return lam


def solve_spd(M: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``M X = B`` for symmetric positive (semi)definite ``M``.

    A Cholesky factorization is tried first. If it fails, the solve is
    retried on ``M + eps*I`` with ``eps = 1e-8 * ||M||_2``.

    Parameters
    ----------
    M : (n, n) array
        Symmetric matrix (checked to 1e-10 relative).
    B : (n,) or (n, k) array
        Right-hand side.

    Returns
    -------
    X : array with the shape of ``B``.

    Raises
    ------
    NonFinite
        If ``M`` or ``B`` contain NaN/Inf.
    SingularAfterRidge
        If the ridged matrix still cannot be factorized.
    """
    M = np.asarray(M, dtype=float)
    B = np.asarray(B, dtype=float)
    _check_finite(M, B)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"M must be square, got shape {M.shape}")
    if B.shape[0] != M.shape[0]:
        raise ValueError(f"row mismatch: M is {M.shape}, B is {B.shape}")
    scale = max(np.max(np.abs(M)), np.finfo(float).tiny)
    if np.max(np.abs(M - M.T)) > 1e-10 * scale:
        raise ValueError("M is not symmetric")
    try:
        return la.cho_solve(la.cho_factor(M, lower=True, check_finite=False), B,
                            check_finite=False)
    except la.LinAlgError:
        pass
    eps = RIDGE_SCALE * spectral_norm_estimate(M)
    try:
        Mr = M + eps * np.eye(M.shape[0])
        return la.cho_solve(la.cho_factor(Mr, lower=True, check_finite=False), B,
                            check_finite=False)
    except la.LinAlgError as exc:
        raise SingularAfterRidge(f"factorization failed with ridge {eps:.3e}") from exc


def projector(M: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto ``range(M^T)``, i.e. ``M^T (M M^T)^-1 M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] > M.shape[1]:
        raise ValueError(f"projector needs a wide or square matrix, got {M.shape}")
    if not np.any(M):
        raise ValueError("all rows of M are zero")
    P = M.T @ solve_spd(M @ M.T, M)
    return 0.5 * (P + P.T)


def pinv_apply(M: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return ``M^T (M M^T)^-1 y`` (minimum-norm solution of ``M x = y``)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return M.T @ solve_spd(M @ M.T, np.asarray(y, dtype=float))


def min_singular_value(S: np.ndarray) -> float:
    """Smallest of the ``min(rows, cols)`` singular values of ``S``."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.size == 0:
        raise ValueError("empty matrix")
    _check_finite(S)
    return float(np.linalg.svd(S, compute_uv=False)[-1])


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], y: np.ndarray,
             t: float, h: float) -> np.ndarray:
    """One classical RK4 step of ``y' = f(t, y)``.

    Raises :class:`NonFinite` if any stage evaluates to NaN/Inf, which in
    practice means the step size is outside the stability region.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    y = np.asarray(y, dtype=float)
    k1 = np.asarray(f(t, y), dtype=float)
    k2 = np.asarray(f(t + 0.5 * h, y + 0.5 * h * k1), dtype=float)
    k3 = np.asarray(f(t + 0.5 * h, y + 0.5 * h * k2), dtype=float)
    k4 = np.asarray(f(t + h, y + h * k3), dtype=float)
    out = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFinite(f"non-finite RK4 stage at t={t:.6g} (h={h:.3g})")
    return out


def rk4_stability_polynomial(z: complex | float) -> complex | float:
    """``R(z) = 1 + z + z^2/2 + z^3/6 + z^4/24`` for ``y' = lambda*y``, ``z = h*lambda``."""
    return 1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24
