"""Compiled inner loops for long simulations.

These fuse the per-step work (projector mapping, RK4 on the neuron
pre-activations, plant RK4) so that multi-million-step runs stay cheap.
The reference implementations live in :mod:`mapping`, :mod:`hnn` and
:mod:`plant`; the test-suite checks the two paths against each other.
"""

import numpy as np
from numba import njit

RIDGE_SCALE = 1e-8

# status codes returned by hnn_run
OK = 0
NONFINITE = 1

MODE_PROJECTOR = 0
MODE_LS = 1


@njit(cache=True)
def _chol_solve_inplace(G, B):
    """Cholesky solve G X = B for small SPD G; returns False on failure."""
    q = G.shape[0]
    L = np.zeros((q, q))
    for j in range(q):
        s = G[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > 0.0:
            return False
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, q):
            t = G[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / L[j, j]
    ncol = B.shape[1]
    for c in range(ncol):
        for i in range(q):
            t = B[i, c]
            for k in range(i):
                t -= L[i, k] * B[k, c]
            B[i, c] = t / L[i, i]
        for i in range(q - 1, -1, -1):
            t = B[i, c]
            for k in range(i + 1, q):
                t -= L[k, i] * B[k, c]
            B[i, c] = t / L[i, i]
    return True


@njit(cache=True)
def _power_norm(G):
    q = G.shape[0]
    x = np.ones(q) / np.sqrt(q)
    lam = 0.0
    for _ in range(20):
        y = G @ x
        lam = np.sqrt(np.sum(y * y))
        if lam == 0.0:
            return np.max(np.sum(np.abs(G), axis=1))
        x = y / lam
    return lam


@njit(cache=True)
def solve_spd_small(G, B):
    """Solve with ridge fallback; returns (X, ok)."""
    X = B.copy()
    if _chol_solve_inplace(G, X):
        return X, True
    eps = RIDGE_SCALE * _power_norm(G)
    Gr = G.copy()
    for i in range(G.shape[0]):
        Gr[i, i] += eps
    X = B.copy()
    ok = _chol_solve_inplace(Gr, X)
    return X, ok


@njit(cache=True)
def _tv(v, Wa, Y, P_A, eta, ka, mode):
    """T v for the current mapping. Y = (Wa Wa^T)^-1 Wa for projector mode."""
    n = v.size
    out = np.zeros(n)
    va = v[:ka]
    if mode == MODE_PROJECTOR:
        z = Y @ va
        out[:ka] = -(Wa.T @ z)
        if eta != 0.0:
            out -= eta * (P_A @ v)
    else:
        out[:ka] = -(Wa.T @ (Wa @ va))
    return out


@njit(cache=True)
def _act(u, alpha, half_beta):
    return alpha * np.tanh(half_beta * u)


@njit(cache=True)
def hnn_run(u, Ws, ws, Hc, P_A, b_ctr, eta, alpha, beta, h, mode, use_rk4,
            blind, anchor, leak, emit_every, offset, out_v, out_E, sat_info):
    """Advance pre-activations ``u`` in place over a chunk of snapshots.

    Ws : (K, q, p), ws : (K, q), Hc : (q, m) constant compensation channel.
    Emits ``v`` and the energy into ``out_v``/``out_E`` whenever
    ``(offset + k) % emit_every == 0``. Returns (status, failing_step, n_emitted,
    n_data_failures).

    ``sat_info`` accumulates [count |v_theta| > alpha/2, first such global
    step, count |v| >= alpha (hard saturation), first such step].
    """
    K = Ws.shape[0]
    q = Ws.shape[1]
    p = Ws.shape[2]
    m = Hc.shape[1]
    ka = p + m
    n = u.size
    half_beta = 0.5 * beta
    Wa = np.zeros((q, ka))
    Wa[:, p:] = Hc
    B = np.zeros((q, ka + 1))
    Y = np.zeros((q, ka))
    bvec = np.zeros(n)
    nblind = blind.shape[1]
    emitted = 0
    data_fail = 0
    for k in range(K):
        Wa[:, :p] = Ws[k]
        w = ws[k]
        if mode == MODE_PROJECTOR:
            bvec[:] = eta * b_ctr
            G = Wa @ Wa.T
            B[:, :ka] = Wa
            B[:, ka] = w
            X, ok = solve_spd_small(G, B)
            if ok:
                Y[:, :] = X[:, :ka]
                bvec[:ka] += Wa.T @ np.ascontiguousarray(X[:, ka])
            else:
                # no usable data this step (e.g. plant at rest)
                Y[:, :] = 0.0
                data_fail += 1
        else:
            bvec[:] = 0.0
            bvec[:ka] += Wa.T @ w
        v0 = _act(u, alpha, half_beta)
        if use_rk4:
            k1 = _tv(v0, Wa, Y, P_A, eta, ka, mode) + bvec
            u2 = u + 0.5 * h * k1
            k2 = _tv(_act(u2, alpha, half_beta), Wa, Y, P_A, eta, ka, mode) + bvec
            u3 = u + 0.5 * h * k2
            k3 = _tv(_act(u3, alpha, half_beta), Wa, Y, P_A, eta, ka, mode) + bvec
            u4 = u + h * k3
            k4 = _tv(_act(u4, alpha, half_beta), Wa, Y, P_A, eta, ka, mode) + bvec
            unew = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            unew = u + h * (_tv(v0, Wa, Y, P_A, eta, ka, mode) + bvec)
        for i in range(n):
            if not np.isfinite(unew[i]):
                return NONFINITE, offset + k, emitted, data_fail
        v = _act(unew, alpha, half_beta)
        if nblind > 0:
            dv = v[:p] - v0[:p]
            c = blind.T @ dv
            pull = blind.T @ (anchor - v0[:p])
            vth = v0[:p] + dv - blind @ c + leak * (blind @ pull)
            for i in range(p):
                r = vth[i] / alpha
                if r > 1.0 - 1e-12:
                    r = 1.0 - 1e-12
                elif r < -1.0 + 1e-12:
                    r = -1.0 + 1e-12
                vth[i] = alpha * r
                unew[i] = np.arctanh(r) / half_beta
            v[:p] = vth
        u[:] = unew
        for i in range(p):
            if abs(v[i]) > 0.5 * alpha:
                if sat_info[0] == 0:
                    sat_info[1] = offset + k
                sat_info[0] += 1
                break
        for i in range(n):
            if abs(v[i]) >= alpha * (1.0 - 1e-12):
                if sat_info[2] == 0:
                    sat_info[3] = offset + k
                sat_info[2] += 1
                break
        if (offset + k) % emit_every == 0:
            tv = _tv(v, Wa, Y, P_A, eta, ka, mode)
            out_v[emitted, :] = v
            out_E[emitted] = -0.5 * np.dot(v, tv) - np.dot(v, bvec) + 0.5 * np.dot(bvec, bvec)
            emitted += 1
    return OK, -1, emitted, data_fail


@njit(cache=True)
def _msd_rhs(x, f, d, m1, m2, k1, b1, k2, b2):
    x1, x2, v1, v2 = x[0], x[1], x[2], x[3]
    out = np.empty(4)
    out[0] = v1
    out[1] = v2
    out[2] = (-k1 * x1 + k1 * x2 - b1 * v1 + b1 * v2 + f) / m1
    out[3] = (k1 * x1 - (k1 + k2) * x2 + b1 * v1 - (b1 + b2) * v2 + d) / m2
    return out


@njit(cache=True)
def msd_stream(x, prev_vel, h, m1, m2, k1s, b1, k2, b2, fs, ds, Ws, ws, xs):
    """Build snapshots and integrate the plant over a chunk.

    For each step k: the snapshot is formed from ``x_k`` and the backward
    difference ``(v_k - v_{k-1})/h``, then the plant is advanced with
    ``f_k, d_k, k1_k`` held constant. ``x`` and ``prev_vel`` are updated in
    place. Returns False if the state became non-finite.
    """
    K = fs.size
    for k in range(K):
        x1, x2, v1, v2 = x[0], x[1], x[2], x[3]
        a1 = (v1 - prev_vel[0]) / h
        a2 = (v2 - prev_vel[1]) / h
        Ws[k, 0, 0] = x2 - x1
        Ws[k, 0, 1] = -v1 + v2
        Ws[k, 0, 2] = 0.0
        Ws[k, 0, 3] = 0.0
        Ws[k, 1, 0] = -x2 + x1
        Ws[k, 1, 1] = -v2 + v1
        Ws[k, 1, 2] = -x2
        Ws[k, 1, 3] = -v2
        ws[k, 0] = m1 * a1 - fs[k]
        ws[k, 1] = m2 * a2
        xs[k, :] = x
        f, d, k1 = fs[k], ds[k], k1s[k]
        s1 = _msd_rhs(x, f, d, m1, m2, k1, b1, k2, b2)
        s2 = _msd_rhs(x + 0.5 * h * s1, f, d, m1, m2, k1, b1, k2, b2)
        s3 = _msd_rhs(x + 0.5 * h * s2, f, d, m1, m2, k1, b1, k2, b2)
        s4 = _msd_rhs(x + h * s3, f, d, m1, m2, k1, b1, k2, b2)
        prev_vel[0] = v1
        prev_vel[1] = v2
        x[:] = x + (h / 6.0) * (s1 + 2.0 * s2 + 2.0 * s3 + s4)
        for i in range(4):
            if not np.isfinite(x[i]):
                return False
    return True
