"""Curvature, rate/radius bounds and gain selection rules.

The contraction bandwidth of the parameter block is ``gamma = kappa * delta * c``
with ``kappa = alpha * beta / 2`` and ``c = lambda_min(P_W + eta P_A_theta)``.
The ultimate radius collects the mapping, disturbance and drift budgets::

    rho = sqrt((P_map + P_dist + P_drift) / gamma*)

Budgets are measured from a run with :class:`BudgetAccumulator`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import ZeroCurvature

DELTA = 0.75
RK4_REAL_BOUND = 2.5


@dataclass
class StabilityReport:
    c_star: float
    gamma_star: float
    rho: float
    lambda_max: float
    h_max: float
    delta: float = DELTA
    budgets: dict = field(default_factory=dict)
    verified: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def curvature(P_W: np.ndarray, P_A_theta: np.ndarray, eta: float) -> float:
    """``lambda_min(P_W + eta * P_A_theta)``, clipped at zero."""
    M = np.asarray(P_W, float) + eta * np.asarray(P_A_theta, float)
    return max(float(np.linalg.eigvalsh(0.5 * (M + M.T))[0]), 0.0)


def max_step(gains, lambda_max: float, fprime_bar: float = 1.0) -> float:
    """RK4 step bound ``2.5 / (alpha beta fbar' lambda_max)``."""
    if lambda_max <= 0 or fprime_bar <= 0:
        raise ValueError("lambda_max and fprime_bar must be positive")
    return RK4_REAL_BOUND / (gains.alpha * gains.beta * fprime_bar * lambda_max)


def guub_bounds(c_star: float, gains, budgets: dict, delta: float = DELTA,
                lambda_max: float | None = None, fprime_bar: float = 1.0) -> StabilityReport:
    """Rate and ultimate radius from the curvature floor and the budget terms.

    ``budgets`` holds ``P_map``, ``P_dist`` and ``P_drift``; for the augmented
    estimator pass ``P_noncomp`` instead of ``P_dist``.
    """
    if not c_star > 0:
        raise ZeroCurvature("curvature floor is zero; rate and radius are undefined")
    kappa = 0.5 * gains.alpha * gains.beta
    gamma = kappa * delta * c_star
    dist = budgets.get("P_noncomp", budgets.get("P_dist", 0.0))
    total = budgets.get("P_map", 0.0) + dist + budgets.get("P_drift", 0.0)
    lam = 1.0 + gains.eta if lambda_max is None else lambda_max
    return StabilityReport(c_star=c_star, gamma_star=gamma, rho=float(np.sqrt(total / gamma)),
                           lambda_max=lam, h_max=max_step(gains, lam, fprime_bar), delta=delta,
                           budgets=dict(budgets, total=total))


def select_beta(gamma_des: float, alpha: float, delta: float, c_star: float) -> float:
    """Gain that yields bandwidth ``gamma_des``: ``2 gamma_des / (alpha delta c*)``."""
    if min(gamma_des, alpha, delta, c_star) <= 0:
        raise ValueError("all arguments must be positive")
    return 2.0 * gamma_des / (alpha * delta * c_star)


def select_beta_frequency(omega_max: float, eps: float, alpha: float, delta: float,
                          c_star: float) -> float:
    """Smallest gain whose tracking error ratio at ``omega_max`` stays below ``eps``."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    return (2.0 / (alpha * delta)) * (omega_max / eps) * np.sqrt(1.0 - eps ** 2) / c_star


@dataclass
class EtaSelection:
    eta: float
    c_star: float
    reached: bool
    advisory: str = ""


def select_eta(curvature_fn: Callable[[float], float], tau_c: float, gains, zeta: float = 0.6,
               fprime_bar: float = 1.0, max_doublings: int = 40) -> EtaSelection:
    """Double ``eta`` from 1 until the curvature floor reaches ``tau_c``.

    Each candidate must keep ``h <= zeta * 2.5 / (alpha beta fbar' (1 + eta))``.
    If the step bound binds first, the last feasible ``eta`` is returned
    with an advisory to lower ``h`` or ``beta``.
    """
    if not 0 < zeta < 1:
        raise ValueError("zeta must lie in (0, 1)")

    def step_ok(eta):
        return gains.h <= zeta * RK4_REAL_BOUND / (gains.alpha * gains.beta * fprime_bar * (1 + eta))

    eta, last = 1.0, None
    for _ in range(max_doublings):
        if not step_ok(eta):
            break
        c = curvature_fn(eta)
        last = (eta, c)
        if c >= tau_c:
            return EtaSelection(eta=eta, c_star=c, reached=True)
        eta *= 2.0
    if last is None:
        return EtaSelection(eta=1.0, c_star=float(curvature_fn(1.0)), reached=False,
                            advisory="step bound violated already at eta=1; reduce h or beta")
    return EtaSelection(eta=last[0], c_star=last[1], reached=False,
                        advisory=f"curvature {last[1]:.3g} < {tau_c:.3g} at the largest "
                                 f"step-feasible eta={last[0]:g}; reduce h (or beta) and recheck")


def scalar_tracker_response(kappa: float, omega: float) -> dict:
    """Gains of the first-order tracker: estimate is low-pass, error is high-pass."""
    if kappa <= 0 or omega < 0:
        raise ValueError("need kappa > 0 and omega >= 0")
    r = np.hypot(kappa, omega)
    return {"estimate_gain": kappa / r, "error_gain": omega / r}


def reduced_target(W, w, P_A_theta, b_ctr_theta, eta, H=None) -> np.ndarray:
    """Parameter-block minimiser of the reduced mapping.

    Solves ``(P_[W H] + eta blkdiag(P_A_theta, 0)) v = [W H]^+ w + eta [b_ctr_theta; 0]``
    and returns the full ``[theta | d]`` vector.
    """
    Wa = W if H is None else np.hstack([W, H])
    k, p = Wa.shape[1], W.shape[1]
    X = np.linalg.solve(Wa @ Wa.T, np.column_stack([Wa, w]))
    Pi = Wa.T @ X[:, :-1]
    rhs = Wa.T @ X[:, -1]
    Pi[:p, :p] += eta * P_A_theta
    rhs[:p] += eta * b_ctr_theta
    return np.linalg.solve(0.5 * (Pi + Pi.T), rhs)[:k]


class BudgetAccumulator:
    """Collects curvature and budget measurements over a run.

    Feed it the snapshots at the diagnostic grid together with the true
    parameters and (when known) the disturbance samples. The mapping budget
    uses finite differences of the reduced target computed with the truth
    frozen at its first value, the drift budget finite differences of the
    truth itself.
    """

    def __init__(self, P_A_theta, b_ctr_theta, eta: float, H=None, H_star: float = 1.0):
        self.P_A_theta = np.asarray(P_A_theta, float)
        self.b_ctr_theta = np.asarray(b_ctr_theta, float)
        self.eta = eta
        self.H = H
        self.H_star = H_star
        self.c_min = np.inf
        self.L_map = 0.0
        self.L_theta_dot = 0.0
        self._d_sum = 0.0
        self._d_sq = 0.0
        self._d_n = 0
        self._prev = None
        self._theta_ref = None
        self.targets = []

    def observe(self, t: float, W: np.ndarray, theta_true: np.ndarray, d: float | None = None) -> None:
        theta_true = np.asarray(theta_true, float)
        if self._theta_ref is None:
            self._theta_ref = theta_true.copy()
        Wa = W if self.H is None else np.hstack([W, self.H])
        G = Wa @ Wa.T
        if np.linalg.cond(G) > 1e12:
            return
        P = Wa.T @ np.linalg.solve(G, Wa)
        Pi = P.copy()
        p = W.shape[1]
        Pi[:p, :p] += self.eta * self.P_A_theta
        c = max(float(np.linalg.eigvalsh(0.5 * (Pi + Pi.T))[0]), 0.0)
        self.c_min = min(self.c_min, c)
        if c <= 1e-12:
            # the reduced target is not unique without curvature
            return
        w_map = W @ self._theta_ref
        target = reduced_target(W, w_map, self.P_A_theta, self.b_ctr_theta, self.eta, self.H)[:p]
        self.targets.append((t, target))
        if self._prev is not None:
            t0, tgt0, th0 = self._prev
            dt = t - t0
            if dt > 0:
                self.L_map = max(self.L_map, float(np.linalg.norm(target - tgt0)) / dt)
                self.L_theta_dot = max(self.L_theta_dot,
                                       float(np.linalg.norm(theta_true - th0)) / dt)
        self._prev = (t, target, theta_true)
        if d is not None:
            self._d_sum += float(d)
            self._d_sq += float(d) ** 2
            self._d_n += 1

    @property
    def L_d(self) -> float:
        """Mean-square disturbance level ``mu^2 + var``."""
        return self._d_sq / self._d_n if self._d_n else 0.0

    def budgets(self, gains, delta: float = DELTA, compensated: bool = False) -> dict:
        if not self.c_min > 0 or not np.isfinite(self.c_min):
            raise ZeroCurvature("no positive curvature observed")
        kappa = 0.5 * gains.alpha * gains.beta
        g = kappa * delta * self.c_min
        out = {"P_map": self.L_map ** 2 / (4 * g),
               "P_drift": self.L_theta_dot ** 2 / (4 * g),
               "L_map": self.L_map, "L_theta_dot": self.L_theta_dot, "L_d": self.L_d}
        dist = kappa ** 2 * self.H_star ** 2 * self.L_d / (4 * g)
        if compensated:
            # a constant channel inside the row space of [W H] is fully absorbed
            out["P_noncomp"] = 0.0
        else:
            out["P_dist"] = dist
        return out

    def report(self, gains, delta: float = DELTA, compensated: bool = False) -> StabilityReport:
        b = self.budgets(gains, delta, compensated)
        return guub_bounds(self.c_min, gains, b, delta=delta)
