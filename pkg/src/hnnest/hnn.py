"""Hopfield estimator core.

Neurons follow ``du/dt = T v + b`` with outputs ``v = alpha * tanh(beta u / 2)``.
:func:`hnn_step` is the plain numpy reference for one step; the
:class:`HnnEstimator` runs long data streams through the compiled loop in
:mod:`hnnest._kernels` and checks identifiability between segments.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .constraints import BoxConstraints, ConstraintSet, LiftedConstraints, embed_augmented, lift, unconstrained
from .errors import DimMismatch, NonFinite, SaturationViolation
from .mapping import HnnMapping, energy  # noqa: F401  (energy is part of this module's API)
from .monitor import HARD, NOMINAL, IdentifiabilityMonitor
from .numerics import rk4_step
from .traces import EstimatorTrace, SnapshotChunk

log = logging.getLogger(__name__)

CLAMP = 1.0 - 1e-12


def activation(u, alpha: float, beta: float) -> np.ndarray:
    """``alpha * tanh(beta u / 2)``, elementwise."""
    return alpha * np.tanh(0.5 * beta * np.asarray(u, dtype=float))


def inverse_activation(v, alpha: float, beta: float) -> np.ndarray:
    """Pre-activation for an output, with ``|v/alpha|`` clamped below one."""
    r = np.clip(np.asarray(v, dtype=float) / alpha, -CLAMP, CLAMP)
    return (2.0 / beta) * np.arctanh(r)


def slope_matrix(v, alpha: float) -> np.ndarray:
    """Normalized activation slope ``diag(1 - (v/alpha)^2)``.

    Raises
    ------
    SaturationViolation
        If any output has reached ``alpha`` in magnitude.
    """
    r = np.asarray(v, dtype=float) / alpha
    if np.any(np.abs(r) >= 1.0):
        raise SaturationViolation("neuron output at or beyond the activation bound")
    return np.diag(1.0 - r * r)


@dataclass(frozen=True)
class GainConfig:
    alpha: float = 10.0
    beta: float = 250.0
    eta: float = 50.0
    h: float = 1e-5
    integrator: str = "rk4"

    def __post_init__(self):
        for name in ("alpha", "beta", "eta", "h"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive and finite, got {val}")
        if self.integrator not in ("rk4", "euler"):
            raise ValueError(f"unknown integrator {self.integrator!r}")

    @property
    def kappa(self) -> float:
        return 0.5 * self.alpha * self.beta

    def check_step(self, lambda_max: float, fprime_bar: float = 1.0) -> bool:
        """Warn (and return False) if ``h`` exceeds the RK4 step bound."""
        h_max = 2.5 / (self.alpha * self.beta * fprime_bar * lambda_max)
        if self.h > h_max:
            warnings.warn(f"h={self.h:.3g} exceeds the RK4 bound {h_max:.3g}", RuntimeWarning)
            return False
        return True


@dataclass
class HnnState:
    """Pre-activations and outputs, laid out ``[theta | d | s]``."""

    u: np.ndarray
    v: np.ndarray
    p: int
    m: int = 0

    @classmethod
    def from_outputs(cls, v, gains: GainConfig, p: int, m: int = 0) -> "HnnState":
        u = inverse_activation(v, gains.alpha, gains.beta)
        return cls(u=u, v=activation(u, gains.alpha, gains.beta), p=p, m=m)

    @property
    def n(self) -> int:
        return self.u.size

    @property
    def theta(self) -> np.ndarray:
        return self.v[:self.p]

    @property
    def d(self) -> np.ndarray:
        return self.v[self.p:self.p + self.m]

    @property
    def s(self) -> np.ndarray:
        return self.v[self.p + self.m:]


def hnn_step(state: HnnState, mapping: HnnMapping, gains: GainConfig) -> HnnState:
    """Advance one step of ``du/dt = T v(u) + b`` with the mapping held fixed."""
    if mapping.n != state.n:
        raise DimMismatch(f"mapping has {mapping.n} neurons, state has {state.n}")
    T, b = mapping.T, mapping.b
    a, be = gains.alpha, gains.beta

    def rhs(_t, u):
        return T @ activation(u, a, be) + b

    if gains.integrator == "rk4":
        u = rk4_step(rhs, state.u, 0.0, gains.h)
    else:
        u = state.u + gains.h * rhs(0.0, state.u)
        if not np.all(np.isfinite(u)):
            raise NonFinite("non-finite Euler step")
    return HnnState(u=u, v=activation(u, a, be), p=state.p, m=state.m)


class HnnEstimator:
    """Constraint-aware Hopfield estimator driven by regression snapshots.

    Parameters
    ----------
    p : int
        Number of physical parameters.
    gains : GainConfig
    theta0 : array_like
        Initial parameter outputs.
    constraints : ConstraintSet, optional
        Parameter constraints. Ignored in ``"ls"`` mode.
    compensation : (q, m) array, optional
        Constant disturbance channel; adds ``m`` compensation neurons.
    mode : {"projector", "ls"}
        ``"projector"`` uses ``-P_W`` and ``W^+ w``; ``"ls"`` uses the
        classical ``-W^T W`` and ``W^T w`` without constraints.
    monitor : IdentifiabilityMonitor, optional
    slack_init : {"zero", "consistent"}
        Slack neurons start at zero, or at the values that satisfy the
        lifted constraints exactly for ``theta0``.
    diag_every : int
        Steps between curvature/monitor evaluations.
    emit_every : int
        Steps between trace records.
    output_box : BoxConstraints, optional
        When given, recorded estimates are clipped onto this box. The
        network state is left alone; the largest violation of the raw
        outputs is kept in ``raw_violation`` (percent of box width).
    """

    def __init__(self, p: int, gains: GainConfig, theta0, constraints: ConstraintSet | None = None,
                 compensation=None, mode: str = "projector",
                 monitor: IdentifiabilityMonitor | None = None, diag_every: int = 100,
                 emit_every: int = 100, name: str = "CA-HNN", d0=None,
                 slack_init: str = "zero", output_box: BoxConstraints | None = None):
        if mode not in ("projector", "ls"):
            raise ValueError(f"unknown mapping mode {mode!r}")
        self.p = int(p)
        self.gains = gains
        self.mode = mode
        self.name = name
        self.monitor = monitor
        self.diag_every = max(int(diag_every), 1)
        self.emit_every = max(int(emit_every), 1)
        self.H = None if compensation is None else np.atleast_2d(np.asarray(compensation, float))
        self.m = 0 if self.H is None else self.H.shape[1]
        if mode == "ls":
            lc = unconstrained(p)
        elif constraints is None:
            lc = unconstrained(p)
        else:
            lc = lift(constraints)
        self.lc: LiftedConstraints = embed_augmented(lc, self.m)
        theta0 = np.asarray(theta0, dtype=float)
        if theta0.size != self.p:
            raise DimMismatch(f"theta0 has {theta0.size} entries, expected {p}")
        d0 = np.zeros(self.m) if d0 is None else np.asarray(d0, float).ravel()
        if slack_init == "zero":
            s0 = np.zeros(lc.n_in)
        elif slack_init == "consistent":
            s0 = lc.slack_init(theta0)
        else:
            raise ValueError(f"unknown slack_init {slack_init!r}")
        v0 = np.concatenate([theta0, d0, s0])
        v0 = np.clip(v0, -CLAMP * gains.alpha, CLAMP * gains.alpha)
        self.u = inverse_activation(v0, gains.alpha, gains.beta)
        self.beta_eff = gains.beta
        self.eta_eff = gains.eta
        self.sat_info = np.zeros(4, dtype=np.int64)
        self.data_failures = 0
        self.output_box = output_box
        self.raw_violation = 0.0
        self.trace = EstimatorTrace(name=name, p=self.p)
        self.diag = {"t": [], "c": [], "score": [], "regime": [], "eta": [], "beta": []}
        self._h_checked = False

    @property
    def n(self) -> int:
        return self.u.size

    @property
    def v(self) -> np.ndarray:
        return activation(self.u, self.gains.alpha, self.beta_eff)

    @property
    def theta(self) -> np.ndarray:
        return self.v[:self.p]

    def curvature_at(self, W: np.ndarray) -> float:
        """``lambda_min(P_[W H] + eta blkdiag(P_A_theta, 0))`` for one snapshot."""
        Wa = W if self.H is None else np.hstack([W, self.H])
        k = Wa.shape[1]
        G = Wa @ Wa.T
        try:
            P = Wa.T @ np.linalg.solve(G, Wa)
        except np.linalg.LinAlgError:
            P = np.zeros((k, k))
        M = P.copy()
        if self.mode == "projector":
            M += self.eta_eff * self.lc.P_A_theta_aug
        else:
            M = Wa.T @ Wa
        return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])

    def _set_beta(self, beta: float) -> None:
        # keep outputs continuous when the gain changes
        if beta != self.beta_eff:
            self.u *= self.beta_eff / beta
            self.beta_eff = beta

    def process(self, chunk: SnapshotChunk) -> None:
        """Consume a block of snapshots, emitting trace records on the global grid."""
        g = self.gains
        K = len(chunk)
        if K == 0:
            return
        q = chunk.W.shape[1]
        Hc = np.zeros((q, 0)) if self.H is None else self.H
        if Hc.shape[0] != q:
            raise DimMismatch(f"compensation channel has {Hc.shape[0]} rows, data has {q}")
        if not self._h_checked:
            self._h_checked = True
            g.check_step(1.0 + (g.eta if self.mode == "projector" and self.lc.r else 0.0))
        mode = _kernels.MODE_PROJECTOR if self.mode == "projector" else _kernels.MODE_LS
        P_A = np.ascontiguousarray(self.lc.P_A)
        b_ctr = np.ascontiguousarray(self.lc.b_ctr)
        W_all = np.ascontiguousarray(chunk.W)
        w_all = np.ascontiguousarray(chunk.w)
        start = 0
        while start < K:
            gidx = chunk.offset + start
            end = min(K, start + self.diag_every - (gidx % self.diag_every))
            blind = np.zeros((self.p, 0))
            anchor = np.zeros(self.p)
            leak = 0.0
            regime = NOMINAL
            if self.monitor is not None:
                st = self.monitor.status
                regime = st.regime
                if st.regime == HARD and st.blind_basis is not None:
                    blind = np.ascontiguousarray(st.blind_basis)
                    anchor = np.asarray(st.anchor, float)
                    leak = self.monitor.leak
            n_emit = sum(1 for k in range(start, end)
                         if (chunk.offset + k) % self.emit_every == 0)
            out_v = np.empty((n_emit, self.n))
            out_E = np.empty(n_emit)
            status, fail_step, emitted, dfail = _kernels.hnn_run(
                self.u, W_all[start:end], w_all[start:end], Hc, P_A, b_ctr, float(self.eta_eff),
                float(g.alpha), float(self.beta_eff), float(g.h), mode, g.integrator == "rk4",
                blind, anchor, float(leak), self.emit_every, chunk.offset + start, out_v, out_E,
                self.sat_info)
            self.data_failures += dfail
            if emitted:
                ks = np.array([k for k in range(start, end)
                               if (chunk.offset + k) % self.emit_every == 0])
                theta_out = out_v[:emitted, :self.p]
                if self.output_box is not None:
                    box = self.output_box
                    over = np.maximum(theta_out - box.upper, 0) + np.maximum(box.lower - theta_out, 0)
                    self.raw_violation = max(self.raw_violation,
                                             100.0 * float(np.max(over / box.width)))
                    theta_out = box.clip(theta_out)
                self.trace.extend(chunk.t[ks], theta_out,
                                  v_d=out_v[:emitted, self.p:self.p + self.m],
                                  energy=out_E[:emitted],
                                  eta=np.full(emitted, self.eta_eff),
                                  regime=np.full(emitted, regime))
            if status != _kernels.OK:
                msg = f"non-finite neuron state at global step {fail_step}"
                self.trace.failure = msg
                raise NonFinite(msg)
            # diagnose on the global grid only, so chunking cannot shift it
            if (chunk.offset + end) % self.diag_every == 0:
                self._diagnose(chunk, end - 1)
            start = end

    def _diagnose(self, chunk: SnapshotChunk, k: int) -> None:
        W = chunk.W[k]
        t = float(chunk.t[k])
        self.diag["t"].append(t)
        self.diag["c"].append(self.curvature_at(W))
        if self.monitor is not None:
            st = self.monitor.observe(W, self.theta, t)
            self.eta_eff = st.eta_effective
            g = self.gains
            self._set_beta(self.monitor.effective_beta(g.alpha, g.beta, g.h))
            self.diag["score"].append(st.score)
            self.diag["regime"].append(st.regime)
        self.diag["eta"].append(self.eta_eff)
        self.diag["beta"].append(self.beta_eff)

    def saturation_summary(self, h: float) -> dict:
        """Counts and first times of ``|v_theta| > alpha/2`` and hard saturation."""
        s = self.sat_info
        return {"half_alpha_count": int(s[0]),
                "half_alpha_first_t": float(s[1] * h) if s[0] else None,
                "saturated_count": int(s[2]),
                "saturated_first_t": float(s[3] * h) if s[2] else None}

    def c_star(self) -> float:
        return float(np.min(self.diag["c"])) if self.diag["c"] else float("nan")
