"""Comparison estimators: box-projected RLS, disturbance-augmented Kalman
filter and disturbance-augmented moving-horizon estimation.

All three clamp the parameter block to the box after every update, and all
consume the same :class:`~hnnest.traces.SnapshotChunk` stream as the HNN
estimators so that trials stay paired.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.signal import lfilter

from .constraints import BoxConstraints
from .errors import CovarianceBlowup, InnovationNonFinite, SolverStall
from .mapping import RegressorSnapshot
from .traces import EstimatorTrace, SnapshotChunk


def _sym(P):
    return 0.5 * (P + P.T)


# ---------------------------------------------------------------- PB-RLS

@dataclass
class RlsState:
    theta: np.ndarray
    P: np.ndarray
    lam: float = 0.995
    P0_norm: float = field(default=None)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).copy()
        self.P = np.asarray(self.P, dtype=float).copy()
        if not 0 < self.lam <= 1:
            raise ValueError("forgetting factor must lie in (0, 1]")
        if self.P0_norm is None:
            self.P0_norm = float(np.linalg.norm(self.P, 2))

    @classmethod
    def initial(cls, theta0, p0: float = 1e6, lam: float = 0.995) -> "RlsState":
        theta0 = np.asarray(theta0, dtype=float)
        return cls(theta=theta0, P=p0 * np.eye(theta0.size), lam=lam)


def pb_rls_step(state: RlsState, snap: RegressorSnapshot, box: BoxConstraints | None) -> RlsState:
    """Exponentially weighted RLS block update followed by a box clamp."""
    W, w = snap.W, snap.w
    P, lam = state.P, state.lam
    PWt = P @ W.T
    S = lam * np.eye(W.shape[0]) + W @ PWt
    K = la.solve(S, PWt.T, assume_a="pos").T
    theta = state.theta + K @ (w - W @ state.theta)
    P = _sym((P - K @ PWt.T) / lam)
    if not np.all(np.isfinite(P)) or np.max(np.abs(P)) > 1e12 * state.P0_norm:
        raise CovarianceBlowup("RLS covariance exceeded 1e12 times its initial norm")
    if box is not None:
        theta = box.clip(theta)
    return RlsState(theta=theta, P=P, lam=lam, P0_norm=state.P0_norm)


# ---------------------------------------------------------------- DA-PB-KF

@dataclass
class KfState:
    z: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        return self.z[:-1]

    @property
    def d(self) -> float:
        return float(self.z[-1])

    @classmethod
    def initial(cls, theta0, d0: float = 0.0, p0_theta: float = 1e6, p0_d: float | None = None,
                q_theta=1e-8, q_d: float = 1e12, r: float = 1e12, q: int = 2) -> "KfState":
        theta0 = np.asarray(theta0, dtype=float)
        p = theta0.size
        p0_d = q_d if p0_d is None else p0_d
        qt = np.broadcast_to(np.asarray(q_theta, dtype=float), (p,))
        return cls(z=np.append(theta0, d0),
                   P=np.diag(np.append(np.full(p, p0_theta), p0_d)),
                   Q=np.diag(np.append(qt, q_d)),
                   R=r * np.eye(q))


def da_pb_kf_step(state: KfState, snap: RegressorSnapshot, box: BoxConstraints | None,
                  h_d=None) -> KfState:
    """Random-walk predict, joint update of ``[theta; d]``, box clamp on ``theta``."""
    W, w = snap.W, snap.w
    h_d = np.array([0.0, 1.0]) if h_d is None else np.asarray(h_d, dtype=float).ravel()
    Hm = np.column_stack([W, h_d])
    P = state.P + state.Q
    PHt = P @ Hm.T
    S = Hm @ PHt + state.R
    innov = w - Hm @ state.z
    if not (np.all(np.isfinite(innov)) and np.all(np.isfinite(S))):
        raise InnovationNonFinite("Kalman innovation is not finite")
    K = la.solve(_sym(S), PHt.T, assume_a="pos").T
    z = state.z + K @ innov
    IKH = np.eye(z.size) - K @ Hm
    # Joseph form keeps P symmetric PSD
    P = _sym(IKH @ P @ IKH.T + K @ state.R @ K.T)
    if box is not None:
        z[:-1] = box.clip(z[:-1])
    return KfState(z=z, P=P, Q=state.Q, R=state.R)


# ---------------------------------------------------------------- DA-PB-MHE

@dataclass
class MheConfig:
    N: int = 20
    M: int = 100
    prefilter: float = 0.9
    q_theta: tuple = (9e-4, 1e-12, 1e-12, 1e-12)
    p0_theta: tuple = (9.0, 1e-8, 1e-8, 1e-8)
    r: float = 1e6
    rho: float = 0.98
    sigma_w: float = 5.0
    sigma_d0: float = 50.0
    damping0: float = 1e-3
    max_iter: int = 30
    grad_tol: float = 1e-8
    ridge: float = 1e-10


@dataclass
class MheState:
    window: deque
    theta_traj: np.ndarray
    d_traj: np.ndarray
    arrival_mean: np.ndarray
    arrival_cov: np.ndarray
    rho_ar: float
    warm_start: np.ndarray | None = None
    stalls: int = 0

    @property
    def theta(self) -> np.ndarray:
        return self.theta_traj[-1]


def _qp_box(Hq, g, x0, lo, hi, cfg: MheConfig):
    """Minimize ``0.5 x'Hx + g'x`` on a box by projected Newton with LM damping.

    Returns ``(x, stalled)``. A step is only accepted if it lowers the
    objective.
    """
    def obj(x):
        return 0.5 * x @ Hq @ x + g @ x

    n = x0.size
    x = np.clip(x0, lo, hi)
    f = obj(x)
    mu = cfg.damping0
    diag = np.diag(Hq).copy()
    Hr = Hq + cfg.ridge * np.eye(n)
    stalled = False
    for _ in range(cfg.max_iter):
        grad = Hq @ x + g
        pg = x - np.clip(x - grad, lo, hi)
        scale = max(1.0, float(np.max(np.abs(g))), float(np.max(np.abs(Hq @ x))))
        if np.max(np.abs(pg)) <= cfg.grad_tol * scale:
            break
        # variables held at a bound by the gradient stay fixed
        active = ((x <= lo) & (grad > 0)) | ((x >= hi) & (grad < 0))
        free = ~active
        accepted = False
        for _ in range(12):
            step = np.zeros(n)
            Hf = Hr[np.ix_(free, free)] + mu * np.diag(diag[free] + 1.0)
            try:
                step[free] = -la.solve(Hf, grad[free], assume_a="pos")
            except la.LinAlgError:
                mu *= 10.0
                continue
            xn = np.clip(x + step, lo, hi)
            fn = obj(xn)
            if fn < f:
                x, f = xn, fn
                mu = max(mu / 3.0, 1e-12)
                accepted = True
                break
            mu *= 10.0
        if not accepted:
            # projected gradient with backtracking always descends from a
            # non-stationary point, so use it before declaring a stall
            x, f, accepted = _projected_gradient_step(obj, x, f, grad, Hq, lo, hi)
            mu = cfg.damping0
        if not accepted:
            # no descent: a stall only if the first-order decrease is above roundoff
            xt = np.clip(x - grad / max(float(np.max(np.sum(np.abs(Hq), axis=1))), 1e-300), lo, hi)
            noise = 1e-10 * (abs(0.5 * x @ Hq @ x) + abs(g @ x) + 1.0)
            stalled = bool(grad @ (x - xt) > noise)
            break
    return x, stalled


def _projected_gradient_step(obj, x, f, grad, Hq, lo, hi):
    t = 1.0 / max(float(np.max(np.sum(np.abs(Hq), axis=1))), 1e-300)
    for _ in range(40):
        xn = np.clip(x - t * grad, lo, hi)
        fn = obj(xn)
        if fn < f:
            return xn, fn, True
        t *= 0.5
    return x, f, False


class MovingHorizonEstimator:
    """Windowed box-constrained least squares over decimated snapshots.

    Per slot the unknowns are ``theta_i`` (p) and ``d_i`` (1). The cost
    weighs measurement residuals by ``1/r``, parameter increments by
    ``Q_theta^-1``, the AR(1) disturbance innovations by ``1/sigma_w^2``,
    and the window head by the arrival covariance.
    """

    def __init__(self, theta0, box: BoxConstraints, cfg: MheConfig = MheConfig(), h_d=None):
        self.cfg = cfg
        self.box = box
        theta0 = np.asarray(theta0, dtype=float)
        self.p = theta0.size
        self.h_d = np.array([0.0, 1.0]) if h_d is None else np.asarray(h_d, float).ravel()
        self.Qth = np.diag(np.asarray(cfg.q_theta, dtype=float))
        self.state = MheState(
            window=deque(maxlen=cfg.N),
            theta_traj=theta0[None, :].copy(),
            d_traj=np.zeros(1),
            arrival_mean=np.append(theta0, 0.0),
            arrival_cov=np.diag(np.append(np.asarray(cfg.p0_theta, float), cfg.sigma_d0 ** 2)),
            rho_ar=cfg.rho,
        )
        self._filt_zi = None

    def prefilter(self, W: np.ndarray, w: np.ndarray):
        """First-order low-pass on the decimated regressor and target streams."""
        a = self.cfg.prefilter
        X = np.concatenate([W.reshape(W.shape[0], -1), w], axis=1)
        if self._filt_zi is None:
            # start the filter at the first sample to avoid a startup transient
            self._filt_zi = a * X[0]
        Y, self._filt_zi = lfilter([1.0 - a], [1.0, -a], X, axis=0, zi=self._filt_zi[None, :])
        self._filt_zi = self._filt_zi[0]
        q = w.shape[1]
        return Y[:, :-q].reshape(W.shape), Y[:, -q:]

    def _arrival_shift(self, W0, w0):
        """Absorb the oldest slot into the arrival prior (update, then predict)."""
        st, cfg = self.state, self.cfg
        Hm = np.column_stack([W0, self.h_d])
        P = st.arrival_cov
        S = Hm @ P @ Hm.T + cfg.r * np.eye(Hm.shape[0])
        K = la.solve(_sym(S), Hm @ P, assume_a="pos").T
        z = st.arrival_mean + K @ (w0 - Hm @ st.arrival_mean)
        IKH = np.eye(z.size) - K @ Hm
        P = IKH @ P @ IKH.T + cfg.r * K @ K.T
        F = np.eye(z.size)
        F[-1, -1] = st.rho_ar
        Q = np.zeros_like(P)
        Q[:-1, :-1] = self.Qth
        Q[-1, -1] = cfg.sigma_w ** 2
        z = F @ z
        z[:-1] = self.box.clip(z[:-1])
        st.arrival_mean = z
        st.arrival_cov = _sym(F @ P @ F.T + Q)

    def _normal_equations(self):
        st, cfg = self.state, self.cfg
        p, L = self.p, len(st.window)
        nv = p + 1
        n = nv * L
        Hq = np.zeros((n, n))
        g = np.zeros(n)
        Rinv = 1.0 / cfg.r
        for i, (W, w) in enumerate(st.window):
            J = np.column_stack([W, self.h_d])
            sl = slice(i * nv, (i + 1) * nv)
            Hq[sl, sl] += Rinv * J.T @ J
            g[sl] -= Rinv * J.T @ w
        # arrival prior on slot 0
        Pi = la.inv(st.arrival_cov)
        Pi = _sym(Pi)
        Hq[:nv, :nv] += Pi
        g[:nv] -= Pi @ st.arrival_mean
        # transition penalties between consecutive slots
        Qi = np.diag(np.append(1.0 / np.diag(self.Qth), 1.0 / cfg.sigma_w ** 2))
        F = np.eye(nv)
        F[-1, -1] = st.rho_ar
        D = np.hstack([-F, np.eye(nv)])
        blk = D.T @ Qi @ D
        for i in range(1, L):
            sl = slice((i - 1) * nv, (i + 1) * nv)
            Hq[sl, sl] += blk
        return _sym(Hq), g

    def update(self, W: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Push one (prefiltered) decimated sample and re-solve the window."""
        st, cfg = self.state, self.cfg
        if len(st.window) == cfg.N:
            W0, w0 = st.window[0]
            self._arrival_shift(W0, w0)
            if st.warm_start is not None:
                st.warm_start = st.warm_start[self.p + 1:]
        st.window.append((np.asarray(W, float), np.asarray(w, float)))
        nv = self.p + 1
        L = len(st.window)
        Hq, g = self._normal_equations()
        lo = np.tile(np.append(self.box.lower, -np.inf), L)
        hi = np.tile(np.append(self.box.upper, np.inf), L)
        if st.warm_start is None or st.warm_start.size == 0:
            x0 = np.tile(st.arrival_mean, L)
        else:
            prev = st.warm_start.reshape(-1, nv)
            fill = np.tile(prev[-1], (L - prev.shape[0], 1))
            x0 = np.concatenate([prev, fill]).ravel()
        x, stalled = _qp_box(Hq, g, x0, lo, hi, cfg)
        if stalled:
            st.stalls += 1
        X = x.reshape(L, nv)
        st.warm_start = x
        st.theta_traj = X[:, :self.p]
        st.d_traj = X[:, -1]
        return st.theta


def da_pb_mhe_step(est: MovingHorizonEstimator, W: np.ndarray, w: np.ndarray) -> MheState:
    """Functional wrapper: feed one decimated sample, return the updated state."""
    est.update(W, w)
    return est.state


# ---------------------------------------------------------------- stream drivers

class RlsEstimator:
    name = "PB-RLS"

    def __init__(self, theta0, box: BoxConstraints, lam: float = 0.995, p0: float = 1e6,
                 emit_every: int = 100, name: str = "PB-RLS"):
        self.state = RlsState.initial(theta0, p0, lam)
        self.box = box
        self.emit_every = emit_every
        self.name = name
        self.trace = EstimatorTrace(name=name, p=len(self.state.theta))

    @property
    def theta(self):
        return self.state.theta

    def process(self, chunk: SnapshotChunk) -> None:
        for k in range(len(chunk)):
            self.state = pb_rls_step(self.state, RegressorSnapshot(chunk.W[k], chunk.w[k]), self.box)
            if (chunk.offset + k) % self.emit_every == 0:
                self.trace.append(float(chunk.t[k]), self.state.theta.copy())


class KalmanEstimator:
    def __init__(self, theta0, box: BoxConstraints, q_theta=1e-8, q_d: float = 1e12,
                 r: float = 1e12, p0_theta: float = 1e6, p0_d: float | None = None,
                 emit_every: int = 100, name: str = "DA-PB-KF"):
        self.state = KfState.initial(theta0, p0_theta=p0_theta, p0_d=p0_d, q_theta=q_theta,
                                     q_d=q_d, r=r)
        self.box = box
        self.emit_every = emit_every
        self.name = name
        self.trace = EstimatorTrace(name=name, p=len(self.state.theta))

    @property
    def theta(self):
        return self.state.theta

    def process(self, chunk: SnapshotChunk) -> None:
        for k in range(len(chunk)):
            self.state = da_pb_kf_step(self.state, RegressorSnapshot(chunk.W[k], chunk.w[k]),
                                       self.box)
            if (chunk.offset + k) % self.emit_every == 0:
                self.trace.append(float(chunk.t[k]), self.state.theta.copy(),
                                  v_d=np.array([self.state.d]))


class MheEstimator:
    """Runs the MHE every ``M`` plant steps and holds its estimate in between."""

    def __init__(self, theta0, box: BoxConstraints, cfg: MheConfig = MheConfig(),
                 emit_every: int = 100, name: str = "DA-PB-MHE"):
        self.mhe = MovingHorizonEstimator(theta0, box, cfg)
        self.emit_every = emit_every
        self.name = name
        self.trace = EstimatorTrace(name=name, p=self.mhe.p)

    @property
    def theta(self):
        return self.mhe.state.theta

    def process(self, chunk: SnapshotChunk) -> None:
        M = self.mhe.cfg.M
        K = len(chunk)
        gk = chunk.offset + np.arange(K)
        dec = np.flatnonzero(gk % M == 0)
        Wf, wf = (self.mhe.prefilter(chunk.W[dec], chunk.w[dec]) if dec.size else (None, None))
        emit = gk % self.emit_every == 0
        j = 0
        theta = self.theta.copy()
        d = float(self.mhe.state.d_traj[-1])
        # walk the chunk in order so the held estimate changes at decimation points
        for k in np.flatnonzero(emit | (gk % M == 0)):
            if gk[k] % M == 0:
                theta = self.mhe.update(Wf[j], wf[j]).copy()
                d = float(self.mhe.state.d_traj[-1])
                j += 1
            if emit[k]:
                self.trace.append(float(chunk.t[k]), theta, v_d=np.array([d]))

    @property
    def stalls(self) -> int:
        return self.mhe.state.stalls


__all__ = ["RlsState", "pb_rls_step", "KfState", "da_pb_kf_step", "MheConfig", "MheState",
           "MovingHorizonEstimator", "da_pb_mhe_step", "RlsEstimator", "KalmanEstimator",
           "MheEstimator", "SolverStall"]
