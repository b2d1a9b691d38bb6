# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled panel kernels: log-potential weights of Gauss panels on horizontal lines.

A panel carries a charge density q(s), s in [-1, 1], sampled at Gauss nodes.
``W[t, i]`` is the weight of node i in  int q(s) Log(z_t - w(s)) ds, computed
with plain Gauss in the far field and exact product integration near the panel.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, asinh, fabs, M_PI

from kllab._quad import NODES, WEIGHTS, COEF, NEAR_RHO, FORWARD_RHO

cdef extern from "<complex.h>" nogil:
    double complex clog(double complex)
    double complex csqrt(double complex)
    double cabs(double complex)
    double creal(double complex)
    double cimag(double complex)

cdef enum:
    NP = 12

cdef double S[NP]
cdef double WQ[NP]
cdef double C[NP][NP]
cdef double SGN[NP]
cdef double T_L[NP]
cdef double T_R[NP]
cdef double RHO_NEAR = NEAR_RHO
cdef double RHO_FWD = FORWARD_RHO
cdef double LOG2 = log(2.0)

for _i in range(NP):
    S[_i] = NODES[_i]
    WQ[_i] = WEIGHTS[_i]
    SGN[_i] = 1.0 if _i % 2 == 0 else -1.0
    T_L[_i] = 0.5 * (NODES[_i] + 1.0)
    T_R[_i] = 0.5 * (1.0 - NODES[_i])
    for _j in range(NP):
        C[_i][_j] = COEF[_i, _j]


cdef inline double bernstein(double complex sig) noexcept nogil:
    cdef double a = cabs(sig - 1.0), b = cabs(sig + 1.0)
    cdef double m = 0.5 * (a + b)
    return m + sqrt(m * m - 1.0 if m > 1.0 else 0.0)


cdef inline double complex xlogx(double complex u) noexcept nogil:
    if creal(u) == 0.0 and cimag(u) == 0.0:
        return 0.0
    return u * clog(u)


cdef void legendre_logs_c(double complex sig, double complex* L) noexcept nogil:
    """L[n] = int_{-1}^{1} P_n(s) Log(sig - s) ds for n < NP."""
    cdef double complex Q[NP + 2]
    cdef double complex q0, q1, qm, scale
    cdef double rho
    cdef int k, n, m
    if creal(sig) == 1.0 and cimag(sig) == 0.0:
        L[0] = 2.0 * LOG2 - 2.0
        for n in range(1, NP):
            L[n] = -2.0 / (n * (n + 1.0))
        return
    if creal(sig) == -1.0 and cimag(sig) == 0.0:
        L[0] = 2.0 * LOG2 - 2.0 + 2j * M_PI
        for n in range(1, NP):
            L[n] = SGN[n] * (-2.0 / (n * (n + 1.0)))
        return
    Q[0] = 0.5 * (clog(sig + 1.0) - clog(sig - 1.0))
    rho = bernstein(sig)
    if rho <= RHO_FWD:
        Q[1] = sig * Q[0] - 1.0
        for k in range(1, NP):
            Q[k + 1] = ((2 * k + 1) * sig * Q[k] - k * Q[k - 1]) / (k + 1)
    else:
        # Miller's backward recurrence, normalised by Q_0
        m = NP + 2 + <int>(34.0 / log(rho))
        q1 = 0.0
        q0 = 1.0
        for k in range(m, 0, -1):
            qm = ((2 * k + 1) * sig * q0 - (k + 1) * q1) / k
            q1 = q0
            q0 = qm
            if k - 1 <= NP:
                Q[k - 1] = qm
        scale = Q[0]
        scale = (0.5 * (clog(sig + 1.0) - clog(sig - 1.0))) / scale
        for k in range(NP + 1):
            Q[k] = Q[k] * scale
    L[0] = xlogx(sig + 1.0) - xlogx(sig - 1.0) - 2.0
    for n in range(1, NP):
        L[n] = 2.0 * (Q[n + 1] - Q[n - 1]) / (2 * n + 1)


cdef inline void node_x(int kind, double lo, double hi, double* x) noexcept nogil:
    cdef int i
    cdef double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo), L = hi - lo
    if kind == 1:
        for i in range(NP):
            x[i] = c + h * S[i]
    elif kind == 0:
        for i in range(NP):
            x[i] = lo + L * T_L[i] * T_L[i]
    else:
        for i in range(NP):
            x[i] = hi - L * T_R[i] * T_R[i]


cdef bint near_moments(int kind, double lo, double hi, double yl, double complex z,
                       double complex* A, double complex* base) noexcept nogil:
    """Legendre moments of Log(z - w(s)) when z is near the panel; False if far."""
    cdef double complex B[NP]
    cdef double complex sig, s1, s2, r, zt
    cdef double L, h
    cdef int n
    if kind == 1:
        h = 0.5 * (hi - lo)
        sig = (z - 0.5 * (lo + hi) - 1j * yl) / h
        if bernstein(sig) >= RHO_NEAR:
            return False
        legendre_logs_c(sig, A)
        base[0] = log(h)
        return True
    L = hi - lo
    if kind == 0:
        zt = (z - (lo + 1j * yl)) / L
    else:
        zt = ((hi + 1j * yl) - z) / L
    r = csqrt(zt)
    s1 = 2.0 * r - 1.0
    s2 = 2.0 * r + 1.0
    if bernstein(s1) >= RHO_NEAR and bernstein(s2) >= RHO_NEAR:
        return False
    legendre_logs_c(s1, A)
    legendre_logs_c(s2, B)
    base[0] = log(L) - 2.0 * LOG2
    if kind == 0:
        for n in range(NP):
            A[n] = A[n] + SGN[n] * B[n]
    else:
        # branch of the -1 factor, chosen to match the principal Log on every side
        base[0] = base[0] + (-1j * M_PI if cimag(r) > 0.0 else 1j * M_PI)
        for n in range(NP):
            A[n] = SGN[n] * A[n] + B[n]
    return True


cdef void panel_row(int kind, double lo, double hi, double yl, double complex z,
                    double complex* out) noexcept nogil:
    """Complex weights of one panel for the target z (line height yl)."""
    cdef double x[NP]
    cdef double complex A[NP]
    cdef double complex base, acc
    cdef int i, n
    if near_moments(kind, lo, hi, yl, z, A, &base):
        for i in range(NP):
            acc = base * WQ[i]
            for n in range(NP):
                acc = acc + A[n] * C[n][i]
            out[i] = acc
        return
    node_x(kind, lo, hi, x)
    for i in range(NP):
        out[i] = WQ[i] * clog(z - (x[i] + 1j * yl))


cdef void panel_row_real(int kind, double lo, double hi, double yl, double complex z,
                         const double* x, double* out) noexcept nogil:
    """Real parts of panel_row, with nodes x precomputed."""
    cdef double complex A[NP]
    cdef double complex base
    cdef double ar[NP]
    cdef double acc, b, dx, dy
    cdef int i, n
    if near_moments(kind, lo, hi, yl, z, A, &base):
        b = creal(base)
        for n in range(NP):
            ar[n] = creal(A[n])
        for i in range(NP):
            acc = b * WQ[i]
            for n in range(NP):
                acc = acc + ar[n] * C[n][i]
            out[i] = acc
        return
    dy = cimag(z) - yl
    for i in range(NP):
        dx = creal(z) - x[i]
        out[i] = 0.5 * WQ[i] * log(dx * dx + dy * dy)


cdef inline bint is_far(int kind, double lo, double hi, double yl, double complex z) noexcept nogil:
    cdef double complex r
    cdef double L
    if kind == 1:
        return bernstein((z - 0.5 * (lo + hi) - 1j * yl) / (0.5 * (hi - lo))) >= RHO_NEAR
    L = hi - lo
    if kind == 0:
        r = csqrt((z - (lo + 1j * yl)) / L)
    else:
        r = csqrt(((hi + 1j * yl) - z) / L)
    return bernstein(2.0 * r - 1.0) >= RHO_NEAR and bernstein(2.0 * r + 1.0) >= RHO_NEAR


def legendre_logs(sig):
    """Vectorised access to the product-integration moments (testing aid)."""
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] s = np.ascontiguousarray(sig, dtype=np.complex128).ravel()
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] out = np.empty((s.shape[0], NP), dtype=np.complex128)
    cdef double complex L[NP]
    cdef Py_ssize_t t
    cdef int n
    for t in range(s.shape[0]):
        legendre_logs_c(s[t], L)
        for n in range(NP):
            out[t, n] = L[n]
    return out


def log_weights(const signed char[:] kind, const double[:] lo, const double[:] hi,
                const double[:] yl, z):
    """Complex weight matrix W[t, k*P + i] for Log(z_t - w) on panels at heights yl."""
    cdef const double complex[:] zz = np.ascontiguousarray(z, dtype=np.complex128).ravel()
    cdef Py_ssize_t nz = zz.shape[0], npan = kind.shape[0], t, k
    out = np.empty((nz, npan * NP), dtype=np.complex128)
    cdef double complex[:, :] o = out
    with nogil:
        for t in range(nz):
            for k in range(npan):
                panel_row(kind[k], lo[k], hi[k], yl[k], zz[t], &o[t, k * NP])
    return out


def potential_matrix(const signed char[:] kind, const double[:] lo, const double[:] hi,
                     const double[:] y, z):
    """Real matrix A[t, k*P + i] of log|z - w| - log|z - conj(w)| weights."""
    cdef const double complex[:] zz = np.ascontiguousarray(z, dtype=np.complex128).ravel()
    cdef Py_ssize_t nz = zz.shape[0], npan = kind.shape[0], t, k
    cdef int i
    cdef double x[NP]
    cdef double rd[NP]
    cdef double ri[NP]
    cdef double zx, dx, dyd, dyi
    out = np.empty((nz, npan * NP), dtype=np.float64)
    cdef double[:, :] o = out
    with nogil:
        for k in range(npan):
            node_x(kind[k], lo[k], hi[k], x)
            for t in range(nz):
                if is_far(kind[k], lo[k], hi[k], y[k], zz[t]) and is_far(kind[k], lo[k], hi[k], -y[k], zz[t]):
                    zx = creal(zz[t])
                    dyd = cimag(zz[t]) - y[k]
                    dyi = cimag(zz[t]) + y[k]
                    for i in range(NP):
                        dx = zx - x[i]
                        o[t, k * NP + i] = 0.5 * WQ[i] * log((dx * dx + dyd * dyd) / (dx * dx + dyi * dyi))
                    continue
                panel_row_real(kind[k], lo[k], hi[k], y[k], zz[t], x, rd)
                panel_row_real(kind[k], lo[k], hi[k], -y[k], zz[t], x, ri)
                for i in range(NP):
                    o[t, k * NP + i] = rd[i] - ri[i]
    return out


def charge_field(const signed char[:] kind, const double[:] lo, const double[:] hi,
                 const double[:] y, const double[:] q, z, const signed char[:] direct):
    """sum_k q_k [Log(z - w_k) - Log(z - conj w_k)], direct terms masked per panel."""
    cdef const double complex[:] zz = np.ascontiguousarray(z, dtype=np.complex128).ravel()
    cdef Py_ssize_t nz = zz.shape[0], npan = kind.shape[0], t, k
    cdef int i
    cdef double complex row[NP]
    cdef double complex acc
    out = np.empty(nz, dtype=np.complex128)
    cdef double complex[:] o = out
    with nogil:
        for t in range(nz):
            acc = 0.0
            for k in range(npan):
                if direct[k]:
                    panel_row(kind[k], lo[k], hi[k], y[k], zz[t], row)
                    for i in range(NP):
                        acc = acc + q[k * NP + i] * row[i]
                panel_row(kind[k], lo[k], hi[k], -y[k], zz[t], row)
                for i in range(NP):
                    acc = acc - q[k * NP + i] * row[i]
            o[t] = acc
    return out


cdef inline double grade_v(double x, double a, double b, double L, double et,
                           double f, double ef, double kappa) noexcept nogil:
    return kappa * (x - a) / L + asinh((x - a) / et) + asinh((x - b) / et) + asinh((x - f) / ef)


cdef inline double grade_dv(double x, double a, double b, double L, double et,
                            double f, double ef, double kappa) noexcept nogil:
    return (kappa / L + 1.0 / sqrt((x - a) * (x - a) + et * et)
            + 1.0 / sqrt((x - b) * (x - b) + et * et) + 1.0 / sqrt((x - f) * (x - f) + ef * ef))


def grade_breakpoints(double a, double b, double et, double f, double ef, double kappa, int K):
    """Breakpoints equally spaced in the grading coordinate v (safeguarded Newton)."""
    out = np.empty(K + 1)
    cdef double[:] e = out
    cdef double L = b - a, v0, v1, tgt, lo, hi, x, g, dx
    cdef int k, it
    v0 = grade_v(a, a, b, L, et, f, ef, kappa)
    v1 = grade_v(b, a, b, L, et, f, ef, kappa)
    e[0] = a
    e[K] = b
    lo = a
    for k in range(1, K):
        tgt = v0 + (v1 - v0) * (<double>k / K)
        hi = b
        x = lo + (hi - lo) / (K - k + 1)
        for it in range(200):
            g = grade_v(x, a, b, L, et, f, ef, kappa) - tgt
            if g > 0:
                hi = x
            else:
                lo = x
            if g == 0.0:
                break
            dx = g / grade_dv(x, a, b, L, et, f, ef, kappa)
            if fabs(dx) <= 4e-16 * L:
                x = x - dx
                break
            x = x - dx
            if not (lo < x < hi):
                x = 0.5 * (lo + hi)
            if hi - lo <= 4e-16 * L:
                break
        e[k] = x
        lo = x
    return out
