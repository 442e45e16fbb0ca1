"""Linear constraints on the parameter block and their slack-lifted form.

Inequalities ``A_in theta <= a_in`` become equalities by appending one
slack neuron per row::

    [A_eq   0 ] [theta]   [a_eq]
    [A_in  -I ] [  s  ] = [a_in]

so the slack value of a feasible point is ``s = A_in theta - a_in <= 0``.
The slacks are ordinary neurons; no sign constraint is imposed on them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidBox, RankDeficient, SingularAfterRidge, ZeroRow
from .numerics import solve_spd


def _as_matrix(A, p: int) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros((0, p))
    return np.atleast_2d(A)


@dataclass(frozen=True)
class BoxConstraints:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        up = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != up.shape:
            raise InvalidBox("lower/upper shape mismatch")
        if np.any(lo >= up):
            raise InvalidBox(f"need lower < upper elementwise, got {lo} vs {up}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def p(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def clip(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(theta, self.lower, self.upper)

    def contains(self, theta: np.ndarray) -> bool:
        theta = np.asarray(theta)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))


#: Box used throughout the mass-spring-damper study, order (k1, b1, k2, b2).
BENCHMARK_BOX = BoxConstraints(lower=np.array([0.25, 0.05, 0.3, 0.15]),
                           upper=np.array([1.75, 0.25, 0.7, 0.35]))


@dataclass(frozen=True)
class ConstraintSet:
    """``A_eq theta = a_eq`` and ``A_in theta <= a_in`` on a ``p``-vector."""

    p: int
    A_eq: np.ndarray = None
    a_eq: np.ndarray = None
    A_in: np.ndarray = None
    a_in: np.ndarray = None

    def __post_init__(self):
        p = int(self.p)
        A_eq = _as_matrix(self.A_eq if self.A_eq is not None else [], p)
        A_in = _as_matrix(self.A_in if self.A_in is not None else [], p)
        a_eq = np.asarray(self.a_eq if self.a_eq is not None else [], dtype=float).ravel()
        a_in = np.asarray(self.a_in if self.a_in is not None else [], dtype=float).ravel()
        for A, a, name in ((A_eq, a_eq, "eq"), (A_in, a_in, "in")):
            if A.shape[1] != p or A.shape[0] != a.size:
                raise ValueError(f"bad {name} block: A {A.shape}, a {a.shape}, p={p}")
            if not (np.all(np.isfinite(A)) and np.all(np.isfinite(a))):
                raise ValueError(f"non-finite {name} constraint data")
        object.__setattr__(self, "A_eq", A_eq)
        object.__setattr__(self, "A_in", A_in)
        object.__setattr__(self, "a_eq", a_eq)
        object.__setattr__(self, "a_in", a_in)

    @property
    def n_eq(self) -> int:
        return self.A_eq.shape[0]

    @property
    def n_in(self) -> int:
        return self.A_in.shape[0]

    @property
    def A_theta(self) -> np.ndarray:
        return np.vstack([self.A_eq, self.A_in])

    def slack_values(self, theta: np.ndarray) -> np.ndarray:
        return self.A_in @ np.asarray(theta, dtype=float) - self.a_in

    def is_feasible(self, theta: np.ndarray, tol: float = 0.0) -> bool:
        theta = np.asarray(theta, dtype=float)
        eq_ok = np.all(np.abs(self.A_eq @ theta - self.a_eq) <= tol)
        return bool(eq_ok and np.all(self.slack_values(theta) <= tol))


def from_box(box: BoxConstraints) -> ConstraintSet:
    """Encode ``lower <= theta <= upper`` as ``2p`` inequality rows."""
    if not isinstance(box, BoxConstraints):
        box = BoxConstraints(*box)
    I = np.eye(box.p)
    return ConstraintSet(p=box.p, A_in=np.vstack([I, -I]),
                         a_in=np.concatenate([box.upper, -box.lower]))


def row_normalize(cs: ConstraintSet) -> ConstraintSet:
    """Scale every row of ``[A | a]`` so that the ``A`` part has unit norm."""

    def scale(A, a):
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0):
            raise ZeroRow("constraint row with all-zero coefficients")
        return A / norms[:, None], a / norms

    A_eq, a_eq = scale(cs.A_eq, cs.a_eq)
    A_in, a_in = scale(cs.A_in, cs.a_in)
    return ConstraintSet(p=cs.p, A_eq=A_eq, a_eq=a_eq, A_in=A_in, a_in=a_in)


@dataclass(frozen=True)
class LiftedConstraints:
    """Equality form ``A v = a`` on ``v = [theta | d | s]`` plus projector data.

    ``m`` counts the compensation columns inserted between the parameter
    and slack blocks (zero for the plain estimator).
    """

    A: np.ndarray
    a: np.ndarray
    p: int
    n_eq: int
    n_in: int
    m: int
    P_A: np.ndarray
    b_ctr: np.ndarray
    P_A_theta: np.ndarray
    source: ConstraintSet = field(repr=False, default=None)

    @property
    def r(self) -> int:
        return self.n_eq + self.n_in

    @property
    def n(self) -> int:
        return self.p + self.m + self.n_in

    @property
    def A_theta(self) -> np.ndarray:
        return self.A[:, :self.p]

    @property
    def P_A_theta_aug(self) -> np.ndarray:
        """``blkdiag(P_A_theta, 0_m)``: constraints only act on the parameters."""
        out = np.zeros((self.p + self.m, self.p + self.m))
        out[:self.p, :self.p] = self.P_A_theta
        return out

    def slack_init(self, theta: np.ndarray) -> np.ndarray:
        """Slack values that make ``A v = a`` hold exactly for ``theta``."""
        if self.source is None:
            return np.zeros(self.n_in)
        return self.source.slack_values(theta)


def _projector_data(A: np.ndarray, a: np.ndarray, p: int):
    r = A.shape[0]
    if r == 0:
        n = A.shape[1]
        return np.zeros((n, n)), np.zeros(n), np.zeros((p, p))
    G = A @ A.T
    if np.linalg.matrix_rank(G) < r:
        raise RankDeficient(f"lifted constraint matrix has rank < {r}")
    try:
        X = solve_spd(G, np.column_stack([A, a]))
    except SingularAfterRidge as exc:
        raise RankDeficient(str(exc)) from exc
    P_A = A.T @ X[:, :-1]
    P_A = 0.5 * (P_A + P_A.T)
    b_ctr = A.T @ X[:, -1]
    A_th = A[:, :p]
    P_th = A_th.T @ solve_spd(G, A_th)
    return P_A, b_ctr, 0.5 * (P_th + P_th.T)


def lift(cs: ConstraintSet, normalize: bool = True) -> LiftedConstraints:
    """Build the slack-lifted equality system and its projector data.

    ``P_A = A^T (A A^T)^-1 A``, ``b_ctr = A^T (A A^T)^-1 a`` (minimum-norm
    point of the lifted affine set) and ``P_A_theta = A_th^T (A A^T)^-1 A_th``.
    With ``normalize`` the lifted rows (slack column included) get unit norm;
    projectors and ``b_ctr`` are invariant to this scaling.
    """
    p, n_eq, n_in = cs.p, cs.n_eq, cs.n_in
    A = np.zeros((n_eq + n_in, p + n_in))
    A[:n_eq, :p] = cs.A_eq
    A[n_eq:, :p] = cs.A_in
    A[n_eq:, p:] = -np.eye(n_in)
    a = np.concatenate([cs.a_eq, cs.a_in])
    if normalize and A.shape[0]:
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0):
            raise ZeroRow("constraint row with all-zero coefficients")
        A, a = A / norms[:, None], a / norms
    P_A, b_ctr, P_th = _projector_data(A, a, p)
    return LiftedConstraints(A=A, a=a, p=p, n_eq=n_eq, n_in=n_in, m=0, P_A=P_A,
                             b_ctr=b_ctr, P_A_theta=P_th, source=cs)


def unconstrained(p: int) -> LiftedConstraints:
    """Empty constraint set (``P_A = 0``, ``b_ctr = 0``)."""
    return lift(ConstraintSet(p=p))


def embed_augmented(lc: LiftedConstraints, m: int) -> LiftedConstraints:
    """Insert ``m`` zero columns for compensation neurons.

    The resulting layout is ``v = [theta | d | s]``; ``a`` keeps its ``r``
    rows since the zero columns add no constraint rows.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    if m == 0:
        return lc
    if lc.m:
        raise ValueError("constraints are already augmented")
    p = lc.p
    A = np.hstack([lc.A[:, :p], np.zeros((lc.r, m)), lc.A[:, p:]])
    n = A.shape[1]
    idx = np.r_[0:p, p + m:n]
    P_A = np.zeros((n, n))
    P_A[np.ix_(idx, idx)] = lc.P_A
    b_ctr = np.zeros(n)
    b_ctr[idx] = lc.b_ctr
    return LiftedConstraints(A=A, a=lc.a.copy(), p=p, n_eq=lc.n_eq, n_in=lc.n_in,
                             m=m, P_A=P_A, b_ctr=b_ctr,
                             P_A_theta=lc.P_A_theta.copy(), source=lc.source)
