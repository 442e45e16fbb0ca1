"""Online identifiability scoring and soft/hard mitigation.

The score is the smallest singular value of the row-normalized stack
``[W_n; sqrt(eta) A_n]``. Below ``tau_warn`` the constraint weight is
boosted (soft regime); below ``tau_freeze`` parameter updates along the
poorly excited directions are projected out (hard regime).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import BadThresholds

NOMINAL = "nominal"
SOFT = "soft"
HARD = "hard"


class Regime(str, Enum):
    nominal = NOMINAL
    soft = SOFT
    hard = HARD


def _normalize_rows(M: np.ndarray) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    norms = np.linalg.norm(M, axis=1)
    keep = norms > 0
    return M[keep] / norms[keep, None]


def _whitened_stack(W, A_theta, eta) -> np.ndarray:
    W = np.atleast_2d(np.asarray(W, dtype=float))
    p = W.shape[1]
    blocks = [_normalize_rows(W)]
    if A_theta is not None and np.size(A_theta):
        A_theta = np.atleast_2d(np.asarray(A_theta, dtype=float))
        if A_theta.shape[1] != p:
            raise ValueError(f"A_theta has {A_theta.shape[1]} columns, W has {p}")
        blocks.append(np.sqrt(eta) * _normalize_rows(A_theta))
    return np.vstack(blocks).reshape(-1, p)


def identifiability_score(W: np.ndarray, A_theta: np.ndarray | None, eta: float) -> float:
    """Smallest singular value of the whitened stack, scale invariant in ``W``.

    All-zero rows carry no direction and are dropped. With fewer usable rows
    than columns the stack has a nontrivial null space and the score is 0.
    """
    S = _whitened_stack(W, A_theta, eta)
    p = S.shape[1]
    if S.shape[0] < p:
        return 0.0
    return float(np.linalg.svd(S, compute_uv=False)[p - 1])


def blind_directions(W: np.ndarray, A_theta: np.ndarray | None, eta: float,
                     tau_freeze: float) -> np.ndarray:
    """Orthonormal basis (p x k) of directions with singular value below ``tau_freeze``.

    Directions in the null space of a short stack count as blind. ``k`` is
    capped at ``p - 1`` so that at least one direction keeps adapting.
    """
    S = _whitened_stack(W, A_theta, eta)
    p = S.shape[1]
    if S.shape[0] == 0:
        sv, Vt = np.zeros(p), np.eye(p)
    else:
        _, s, Vt = np.linalg.svd(S, full_matrices=True)
        sv = np.zeros(p)
        sv[:s.size] = s
    # singular values come sorted descending; blind ones are at the end
    k = min(int(np.sum(sv < tau_freeze)), p - 1)
    if k == 0:
        return np.zeros((p, 0))
    return Vt[p - k:].T.copy()


def classify(score: float, tau_warn: float, tau_freeze: float) -> str:
    if not (0.0 < tau_freeze < tau_warn):
        raise BadThresholds(f"need 0 < tau_freeze < tau_warn, got {tau_freeze}, {tau_warn}")
    if score >= tau_warn:
        return NOMINAL
    if score >= tau_freeze:
        return SOFT
    return HARD


@dataclass
class MonitorStatus:
    score: float
    regime: str
    blind_basis: np.ndarray | None
    eta_effective: float
    anchor: np.ndarray


def mitigate(du: np.ndarray, status: MonitorStatus, gains, *, v_theta: np.ndarray | None = None,
             leak: float = 1e-3, eta_cap: float | None = None, zeta: float = 0.6,
             fprime_bar: float = 1.0):
    """Apply the regime's mitigation to a parameter-block update.

    Returns ``(du', gains')``. In the soft regime the constraint weight is
    doubled up to ``eta_cap`` and ``beta`` is lowered if the step would
    leave a ``zeta`` fraction of the RK4 bound. In the hard regime the
    update loses its blind-direction component and gets a small pull
    toward the anchor.
    """
    du = np.asarray(du, dtype=float)
    if status.regime == NOMINAL:
        return du, gains
    if status.regime == SOFT:
        cap = eta_cap if eta_cap is not None else 10.0 * gains.eta
        eta = min(2.0 * gains.eta, cap)
        beta = gains.beta
        h_lim = zeta * 2.5 / (gains.alpha * beta * fprime_bar * (1.0 + eta))
        if gains.h > h_lim:
            beta = zeta * 2.5 / (gains.alpha * gains.h * fprime_bar * (1.0 + eta))
        return du, replace(gains, eta=eta, beta=beta)
    B = status.blind_basis
    if B is None or B.shape[1] == 0:
        return du, gains
    out = du - B @ (B.T @ du)
    if leak and v_theta is not None:
        out = out + leak * (B @ (B.T @ (status.anchor - v_theta)))
    return out, gains


class IdentifiabilityMonitor:
    """Stateful monitor sampled every few estimator steps.

    Parameters
    ----------
    A_theta : (r, p) array or None
        Constraint rows acting on the parameters.
    eta0 : float
        Configured constraint weight; also used inside the score.
    tau_warn, tau_freeze : float
        Regime thresholds.
    leak : float
        Per-step pull toward the anchor along blind directions.
    eta_cap : float, optional
        Upper bound on the boosted weight, default ``10 * eta0``.
    anchor_dwell : float
        Seconds of continuous nominal regime before the anchor moves.
    eta_decay : float
        Factor per second by which the boost relaxes once nominal.
    """

    def __init__(self, A_theta, eta0: float, tau_warn: float = 1e-2, tau_freeze: float = 1e-3,
                 leak: float = 1e-3, eta_cap: float | None = None, zeta: float = 0.6,
                 anchor_dwell: float = 1.0, eta_decay: float = 0.5, theta0=None):
        classify(1.0, tau_warn, tau_freeze)
        self.A_theta = None if A_theta is None or np.size(A_theta) == 0 else np.atleast_2d(A_theta)
        self.eta0 = float(eta0)
        self.tau_warn = tau_warn
        self.tau_freeze = tau_freeze
        self.leak = leak
        self.eta_cap = 10.0 * eta0 if eta_cap is None else eta_cap
        self.zeta = zeta
        self.anchor_dwell = anchor_dwell
        self.eta_decay = eta_decay
        self._nominal_since = None
        self._last_t = None
        self.status = MonitorStatus(score=np.inf, regime=NOMINAL, blind_basis=None,
                                    eta_effective=self.eta0,
                                    anchor=None if theta0 is None else np.array(theta0, float))

    def observe(self, W: np.ndarray, v_theta: np.ndarray, t: float) -> MonitorStatus:
        st = self.status
        if st.anchor is None:
            st.anchor = np.array(v_theta, dtype=float)
        dt = 0.0 if self._last_t is None else max(t - self._last_t, 0.0)
        self._last_t = t
        score = identifiability_score(W, self.A_theta, self.eta0)
        regime = classify(score, self.tau_warn, self.tau_freeze)
        eta = st.eta_effective
        if regime == NOMINAL:
            if self._nominal_since is None:
                self._nominal_since = t
            if t - self._nominal_since >= self.anchor_dwell:
                st.anchor = np.array(v_theta, dtype=float)
            eta = self.eta0 + (eta - self.eta0) * self.eta_decay ** dt
            basis = None
        else:
            self._nominal_since = None
            if regime == SOFT:
                eta = min(2.0 * eta, self.eta_cap)
                basis = None
            else:
                basis = st.blind_basis if st.regime == HARD and st.blind_basis is not None else \
                    blind_directions(W, self.A_theta, self.eta0, self.tau_freeze)
        self.status = MonitorStatus(score=score, regime=regime, blind_basis=basis,
                                    eta_effective=eta, anchor=st.anchor)
        return self.status

    def effective_beta(self, alpha: float, beta: float, h: float, fprime_bar: float = 1.0) -> float:
        """Largest ``beta' <= beta`` keeping ``h`` within ``zeta`` of the RK4 bound."""
        eta = self.status.eta_effective
        if eta <= self.eta0:
            return beta
        lim = self.zeta * 2.5 / (alpha * h * fprime_bar * (1.0 + eta))
        return min(beta, lim)
