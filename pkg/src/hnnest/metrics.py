"""Accuracy, transient and feasibility metrics on estimator traces.

Errors are arrays of shape ``(K, p)``; per-parameter values are averaged
with equal weights into one number per trial.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .constraints import BoxConstraints


@dataclass
class MetricRecord:
    final_mse: float
    auc_mse: float
    t5: float | None
    t1: float | None
    viol_pct: float

    def to_dict(self) -> dict:
        return asdict(self)


def _errors(errors) -> np.ndarray:
    e = np.asarray(errors, dtype=float)
    return e[:, None] if e.ndim == 1 else e


def final_mse(errors) -> float:
    """Mean squared error over the last ``floor(0.1 K)`` samples."""
    e = _errors(errors)
    K = e.shape[0]
    if K < 10:
        raise ValueError("need at least 10 samples")
    kf = K // 10
    return float(np.mean(e[-kf:] ** 2))


def auc_mse(errors, dt: float) -> float:
    """``dt * sum_k e[k]^2``, averaged over parameters."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    e = _errors(errors)
    return float(dt * np.sum(np.mean(e ** 2, axis=1)))


def normalization(theta_true, box: BoxConstraints | None) -> np.ndarray:
    """Per-parameter scale ``max(range of the truth, box width)``."""
    tt = np.asarray(theta_true, dtype=float)
    tt = tt[None, :] if tt.ndim == 1 else tt
    c = tt.max(axis=0) - tt.min(axis=0)
    if box is not None:
        c = np.maximum(c, box.width)
    if np.any(c <= 0):
        raise ValueError("normalization is zero for some parameter; pass a box")
    return c


def settling_time(errors, scale, eps: float, dt: float, dwell: float = 1.0,
                  t0: float = 0.0) -> float | None:
    """First time after which the normalized error stays within ``eps``.

    The sup over parameters of ``|e_i| / c_i`` must stay at or below ``eps``
    from that sample to the end of the trace, and the remaining stretch
    must last at least ``dwell`` seconds. Returns None if never satisfied.
    """
    e = np.abs(_errors(errors)) / np.asarray(scale, dtype=float)
    en = e.max(axis=1)
    above = np.flatnonzero(en > eps)
    k = 0 if above.size == 0 else above[-1] + 1
    K = en.size
    if k >= K:
        return None
    # the trace must cover the dwell after entry
    if (K - 1 - k) * dt + dt < dwell - 1e-12:
        return None
    return float(t0 + k * dt)


def violation_pct(theta, box: BoxConstraints) -> float:
    """Largest normalized box violation over time and parameters, in percent."""
    th = np.asarray(theta, dtype=float)
    th = th[None, :] if th.ndim == 1 else th
    over = np.maximum(th - box.upper, 0.0) + np.maximum(box.lower - th, 0.0)
    return float(100.0 * np.max(over / box.width)) if th.size else 0.0


def zoh_resample(t_src, values, t_dst) -> np.ndarray:
    """Zero-order-hold a trace onto another time grid."""
    t_src = np.asarray(t_src, dtype=float)
    idx = np.searchsorted(t_src, np.asarray(t_dst, dtype=float), side="right") - 1
    return np.asarray(values)[np.clip(idx, 0, len(t_src) - 1)]


def evaluate(t, theta, theta_true, box: BoxConstraints, dwell: float = 1.0) -> MetricRecord:
    """All four metrics for one trace on a uniform grid."""
    t = np.asarray(t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    theta_true = np.asarray(theta_true, dtype=float)
    if theta_true.ndim == 1:
        theta_true = np.broadcast_to(theta_true, theta.shape)
    dt = float(t[1] - t[0]) if t.size > 1 else 1.0
    e = theta - theta_true
    scale = normalization(theta_true, box)
    t5 = settling_time(e, scale, 0.05, dt, dwell, t0=float(t[0]))
    t1 = settling_time(e, scale, 0.01, dt, dwell, t0=float(t[0]))
    return MetricRecord(final_mse=final_mse(e), auc_mse=auc_mse(e, dt), t5=t5, t1=t1,
                        viol_pct=violation_pct(theta, box))
