"""Two-mass spring-damper truth model and regression snapshots.

State ``x = [x1, x2, v1, v2]``. The input force acts on mass 1, the
unmeasured disturbance on mass 2. Parameters are ordered ``(k1, b1, k2, b2)``
throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import _kernels
from .errors import NonFinite
from .mapping import RegressorSnapshot
from .numerics import rk4_step
from .traces import SnapshotChunk

#: Disturbance enters the second row of the regression.
H_DIST = np.array([[0.0], [1.0]])


@dataclass(frozen=True)
class MsdParams:
    m1: float = 1.0
    m2: float = 1.0
    k1: float = 1.0
    b1: float = 0.15
    k2: float = 0.5
    b2: float = 0.25

    def __post_init__(self):
        for name in ("m1", "m2", "k1", "k2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (self.b1 >= 0 and self.b2 >= 0):
            raise ValueError("damping must be nonnegative")

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.k1, self.b1, self.k2, self.b2])

    def system_matrices(self, k1: float | None = None):
        """``(A_c, B_c, H_c)`` of the continuous-time model."""
        m1, m2, b1, k2, b2 = self.m1, self.m2, self.b1, self.k2, self.b2
        k1 = self.k1 if k1 is None else k1
        A = np.array([[0.0, 0.0, 1.0, 0.0],
                      [0.0, 0.0, 0.0, 1.0],
                      [-k1 / m1, k1 / m1, -b1 / m1, b1 / m1],
                      [k1 / m2, -(k1 + k2) / m2, b1 / m2, -(b1 + b2) / m2]])
        B = np.array([0.0, 0.0, 1.0 / m1, 0.0])
        H = np.array([0.0, 0.0, 0.0, 1.0 / m2])
        return A, B, H


@dataclass
class PlantState:
    x: np.ndarray
    t: float = 0.0
    prev_vel: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).copy()
        if self.prev_vel is None:
            # zero initial acceleration
            self.prev_vel = self.x[2:].copy()
        if not np.all(np.isfinite(self.x)):
            raise NonFinite("plant state is not finite")


@dataclass(frozen=True)
class DisturbanceSpec:
    kind: str = "none"
    mu: float = 0.0
    sigma2: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("none", "gaussian"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")


@dataclass(frozen=True)
class ParameterSchedule:
    kind: str = "constant"
    omega: float = 0.05
    offset: float = 1.0
    amplitude: float = 0.6

    def __post_init__(self):
        if self.kind not in ("constant", "cosine"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")


def dynamics(x, f: float, d: float, params: MsdParams, k1: float | None = None) -> np.ndarray:
    A, B, H = params.system_matrices(k1)
    return A @ np.asarray(x, dtype=float) + B * f + H * d


def simulate_step(state: PlantState, f: float, d: float, params: MsdParams, h: float,
                  k1: float | None = None) -> PlantState:
    """One RK4 step with ``f``, ``d`` and ``k1`` held over the step."""
    x = rk4_step(lambda _t, y: dynamics(y, f, d, params, k1), state.x, state.t, h)
    return PlantState(x=x, t=state.t + h, prev_vel=state.x[2:].copy())


def input_signal(t):
    """Multi-sine excitation ``1 + sin t cos 2t + cos 3t + sin(t/2)``."""
    t = np.asarray(t, dtype=float)
    out = 1.0 + np.sin(t) * np.cos(2 * t) + np.cos(3 * t) + np.sin(0.5 * t)
    return float(out) if out.ndim == 0 else out


def sample_disturbance(spec: DisturbanceSpec, rng: np.random.Generator, size=None):
    """Draw one (or ``size``) disturbance samples."""
    if spec.kind == "none":
        return 0.0 if size is None else np.zeros(size)
    sigma = np.sqrt(spec.sigma2)
    if sigma == 0.0:
        return float(spec.mu) if size is None else np.full(size, float(spec.mu))
    z = rng.standard_normal(size)
    return spec.mu + sigma * z if size is not None else float(spec.mu + sigma * z)


def k1_schedule(sched: ParameterSchedule, t, k1_const: float = 1.0):
    if sched.kind == "constant":
        return k1_const if np.ndim(t) == 0 else np.full(np.shape(t), k1_const)
    out = sched.offset - sched.amplitude * np.cos(sched.omega * np.asarray(t, dtype=float))
    return float(out) if out.ndim == 0 else out


def regressor_matrix(x) -> np.ndarray:
    x1, x2, v1, v2 = np.asarray(x, dtype=float)
    return np.array([[x2 - x1, -v1 + v2, 0.0, 0.0],
                     [-x2 + x1, -v2 + v1, -x2, -v2]])


def build_regression(state_before: PlantState, state_after: PlantState, f: float, h: float,
                     params: MsdParams = MsdParams(), with_H: bool = False) -> RegressorSnapshot:
    """Snapshot at the later of two consecutive states.

    Accelerations are backward differences of the velocities. The
    disturbance term is left out of ``w`` since it is not measured.
    """
    v_now = state_after.x[2:]
    v_prev = state_before.x[2:]
    a = (v_now - v_prev) / h
    w = np.array([params.m1 * a[0] - f, params.m2 * a[1]])
    return RegressorSnapshot(W=regressor_matrix(state_after.x), w=w,
                             H=H_DIST if with_H else None, t=state_after.t)


def bode_d_to_x2(params: MsdParams, omegas) -> list[dict]:
    """Magnitude and phase (rad) of ``X2(jw)/D(jw)`` at each frequency."""
    A, _, H = params.system_matrices()
    out = []
    for om in np.atleast_1d(np.asarray(omegas, dtype=float)):
        g = np.linalg.solve(1j * om * np.eye(4) - A, H.astype(complex))[1]
        out.append({"omega": float(om), "magnitude": float(abs(g)), "phase": float(np.angle(g))})
    return out


def resonance_frequency(params: MsdParams, lo: float = 1e-3, hi: float = 10.0,
                        n: int = 20001) -> float:
    """Frequency of the peak of ``|X2/D|`` on a dense log grid."""
    om = np.geomspace(lo, hi, n)
    mag = np.array([r["magnitude"] for r in bode_d_to_x2(params, om)])
    return float(om[np.argmax(mag)])


@dataclass
class MsdSimulator:
    """Streams regression snapshots from the truth model in fixed-size chunks.

    Snapshot ``k`` is formed at ``t_k = k h`` from ``x(t_k)`` and the
    backward difference of the velocities; the plant then advances with
    ``f(t_k)``, ``d_k`` and ``k1(t_k)`` held over the step.
    """

    params: MsdParams = field(default_factory=MsdParams)
    schedule: ParameterSchedule = field(default_factory=ParameterSchedule)
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    h: float = 1e-5
    x0: tuple = (0.0, 0.3, 0.0, 0.0)
    rng: np.random.Generator | None = None

    def __post_init__(self):
        self.state = PlantState(x=np.array(self.x0, dtype=float))
        self.k = 0
        if self.rng is None:
            self.rng = np.random.default_rng(self.disturbance.seed)

    def chunks(self, n_steps: int, chunk_size: int = 200_000) -> Iterator[SnapshotChunk]:
        p = self.params
        remaining = int(n_steps)
        while remaining > 0:
            K = min(chunk_size, remaining)
            ks = np.arange(self.k, self.k + K)
            t = ks * self.h
            fs = input_signal(t)
            ds = sample_disturbance(self.disturbance, self.rng, K)
            k1s = k1_schedule(self.schedule, t, p.k1)
            Ws = np.empty((K, 2, 4))
            ws = np.empty((K, 2))
            xs = np.empty((K, 4))
            ok = _kernels.msd_stream(self.state.x, self.state.prev_vel, self.h, p.m1, p.m2,
                                     k1s, p.b1, p.k2, p.b2, fs, ds, Ws, ws, xs)
            if not ok:
                raise NonFinite(f"plant state diverged in steps {self.k}..{self.k + K}")
            theta = np.empty((K, 4))
            theta[:, 0] = k1s
            theta[:, 1:] = p.theta[1:]
            chunk = SnapshotChunk(t=t, W=Ws, w=ws, offset=self.k, h=self.h, f=fs, d=ds,
                                  x=xs, theta_true=theta)
            self.k += K
            self.state.t = self.k * self.h
            remaining -= K
            yield chunk
