"""Pure numpy implementation of the panel kernels (same API as the compiled core)."""

import numpy as np

from ._quad import (COEF, FORWARD_RHO, INTERIOR, LEFT, NEAR_RHO, P, SIGNS,
                    WEIGHTS, panel_nodes)

LOG2 = np.log(2.0)


def _bernstein(sig):
    a = np.abs(sig - 1)
    b = np.abs(sig + 1)
    m = 0.5 * (a + b)
    return m + np.sqrt(np.maximum(m * m - 1, 0.0))


def _xlogx(u):
    out = np.zeros_like(u)
    nz = u != 0
    out[nz] = u[nz] * np.log(u[nz])
    return out


def legendre_logs(sig):
    """L[t, n] = int_{-1}^{1} P_n(s) Log(sig_t - s) ds."""
    sig = np.ascontiguousarray(sig, dtype=complex).ravel()
    out = np.empty((sig.size, P), dtype=complex)
    Q = np.empty((sig.size, P + 1), dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        Q[:, 0] = 0.5 * (np.log(sig + 1) - np.log(sig - 1))
    rho = _bernstein(sig)
    fwd = rho <= FORWARD_RHO
    if fwd.any():
        s = sig[fwd]
        q = np.empty((s.size, P + 1), dtype=complex)
        q[:, 0] = Q[fwd, 0]
        with np.errstate(invalid="ignore"):
            q[:, 1] = s * q[:, 0] - 1
            for k in range(1, P):
                q[:, k + 1] = ((2 * k + 1) * s * q[:, k] - k * q[:, k - 1]) / (k + 1)
        Q[fwd] = q
    back = ~fwd
    if back.any():
        s = sig[back]
        m = P + 2 + int(34.0 / np.log(rho[back].min()))
        q1 = np.zeros_like(s)
        q0 = np.ones_like(s)
        store = np.empty((s.size, P + 1), dtype=complex)
        for k in range(m, 0, -1):
            qm = ((2 * k + 1) * s * q0 - (k + 1) * q1) / k
            q1, q0 = q0, qm
            if k - 1 <= P:
                store[:, k - 1] = qm
        store *= (Q[back, 0] / store[:, 0])[:, None]
        Q[back] = store
    out[:, 0] = _xlogx(sig + 1) - _xlogx(sig - 1) - 2
    for n in range(1, P):
        out[:, n] = 2 * (Q[:, n + 1] - Q[:, n - 1]) / (2 * n + 1)
    # exact endpoint limits
    n = np.arange(1, P)
    for target, sgn in ((1.0, np.ones(P - 1)), (-1.0, SIGNS[1:])):
        hit = sig == target
        if hit.any():
            out[hit, 0] = 2 * LOG2 - 2 + (2j * np.pi if target < 0 else 0)
            out[hit, 1:] = sgn * (-2.0 / (n * (n + 1.0)))
    return out


def _panel_weights(kind, lo, hi, yl, z):
    """Complex weights (nz, P) of one panel."""
    x, _ = panel_nodes(kind, lo, hi)
    with np.errstate(divide="ignore", invalid="ignore"):  # coincident nodes are overwritten below
        out = WEIGHTS[None, :] * np.log(z[:, None] - (x + 1j * yl)[None, :])
    if kind == INTERIOR:
        h = 0.5 * (hi - lo)
        sig = (z - 0.5 * (lo + hi) - 1j * yl) / h
        near = _bernstein(sig) < NEAR_RHO
        if near.any():
            out[near] = np.log(h) * WEIGHTS[None, :] + legendre_logs(sig[near]) @ COEF
        return out
    L = hi - lo
    zt = (z - (lo + 1j * yl)) / L if kind == LEFT else ((hi + 1j * yl) - z) / L
    r = np.sqrt(zt)
    s1, s2 = 2 * r - 1, 2 * r + 1
    near = (_bernstein(s1) < NEAR_RHO) | (_bernstein(s2) < NEAR_RHO)
    if near.any():
        A = legendre_logs(s1[near])
        B = legendre_logs(s2[near])
        base = np.full(near.sum(), np.log(L) - 2 * LOG2, dtype=complex)
        if kind == LEFT:
            A = A + SIGNS * B
        else:
            base += 1j * np.pi * np.where(r[near].imag > 0, -1.0, 1.0)
            A = SIGNS * A + B
        out[near] = base[:, None] * WEIGHTS[None, :] + A @ COEF
    return out


def log_weights(kind, lo, hi, yl, z):
    z = np.ascontiguousarray(z, dtype=complex).ravel()
    cols = [_panel_weights(int(k), a, b, y, z) for k, a, b, y in zip(kind, lo, hi, yl)]
    return np.hstack(cols) if cols else np.empty((z.size, 0), dtype=complex)


def potential_matrix(kind, lo, hi, y, z):
    y = np.asarray(y, dtype=float)
    return (log_weights(kind, lo, hi, y, z) - log_weights(kind, lo, hi, -y, z)).real


def charge_field(kind, lo, hi, y, q, z, direct):
    z = np.ascontiguousarray(z, dtype=complex).ravel()
    out = np.zeros(z.size, dtype=complex)
    for k, (kd, a, b, yk) in enumerate(zip(kind, lo, hi, y)):
        qk = q[k * P:(k + 1) * P]
        if direct[k]:
            out += _panel_weights(int(kd), a, b, yk, z) @ qk
        out -= _panel_weights(int(kd), a, b, -yk, z) @ qk
    return out


def grade_breakpoints(a, b, et, f, ef, kappa, K):
    """Breakpoints equally spaced in the grading coordinate v (vectorised bisection)."""
    L = b - a

    def v(x):
        return kappa * (x - a) / L + np.arcsinh((x - a) / et) + np.arcsinh((x - b) / et) + np.arcsinh((x - f) / ef)

    v0, v1 = v(a), v(b)
    tgt = v0 + (v1 - v0) * np.arange(1, K) / K
    lo = np.full(K - 1, float(a))
    hi = np.full(K - 1, float(b))
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        below = v(mid) < tgt
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return np.concatenate([[a], 0.5 * (lo + hi), [b]])
