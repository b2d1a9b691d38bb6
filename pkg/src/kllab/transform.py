"""Half-plane transformation iota_t = g0_t o g_t^{-1} of a Komatu-Loewner chain.

iota_t starts as the identity and obeys

    d/dt iota_t(z) = 2 iota_t'(xi)^2 / (iota_t(z) - U) - 2 iota_t'(z) / (z - xi)
                     + 2 pi iota_t'(z) H_{s(t)}(z, xi),     U(t) = iota_t(xi(t)).

Values are tracked on circles of 32 nodes: one around xi(t) and one around
each user point. A discrete Fourier transform of the nodal values gives the
Taylor coefficients, from which iota, iota' and iota'' follow anywhere
inside the circle and iota' on the circle itself. The circle around xi(t)
is re-seeded from its Taylor series when xi(t) drifts by half a radius or
the slits come closer. Slits and circles advance together with classical
RK4 on a fixed grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import CircleCollision, IncrementMismatch
from .geometry import SlitVector, distance_R, slit_distance, validate
from .kernel import KernelConfig, bmd_from_solution, eval_h
from .ode import dopri45
from .slit_ode import _split, rk4_slit_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IotaConfig:
    n_nodes: int = 32
    rho_frac: float = 0.25
    rho_max: float = 0.5
    dt: float = 1e-3
    n_keep: int = 8
    kernel: KernelConfig = field(default_factory=KernelConfig)


@dataclass
class IotaHistory:
    t: np.ndarray
    xi: np.ndarray
    U: np.ndarray
    U_imag: np.ndarray
    iota1: np.ndarray
    iota2: np.ndarray
    a0: np.ndarray
    bmd: np.ndarray
    R: np.ndarray
    points: np.ndarray
    values: np.ndarray  # values[i, k] = iota_{t_i}(points[k])
    states: np.ndarray
    n_recenter: int = 0

    def iota1_ratio(self) -> float:
        return float(self.iota1.max() / self.iota1.min())


class _Circle:
    """Nodal values of iota on a circle and their Taylor coefficients."""

    def __init__(self, n):
        self.n = n
        self.k = np.arange(n)
        self.omega = np.exp(2j * np.pi * self.k / n)

    def coeffs(self, vals):
        # b_k = a_k rho^k
        return np.fft.fft(vals) / self.n

    def eval(self, b, u, order=0):
        """Derivative ``order`` (times rho^order) of sum b_k u^k."""
        k = self.k
        if order == 0:
            c = b
            p = k
        elif order == 1:
            c = k * b
            p = k - 1
        else:
            c = k * (k - 1) * b
            p = k - 2
        u = np.asarray(u, dtype=complex)[..., None]
        pw = np.where(p >= 0, u ** np.maximum(p, 0), 0.0)
        return (c * pw).sum(axis=-1)

    def deriv_on_circle(self, b):
        """rho * iota' at the nodes."""
        return np.fft.ifft(self.k * b) * self.n / self.omega


def _node_rhs(iota_z, d_iota_z, z, xi, U, i1, H):
    return 2.0 * i1 * i1 / (iota_z - U) - 2.0 * d_iota_z / (z - xi) + 2.0 * np.pi * d_iota_z * H


def _grid_from(path, t_max, dt):
    """Step grid and stage driver values (t_n, xi(t_n), xi(t_n + h/2))."""
    if hasattr(path, "dB"):  # SKLE path: piecewise linear through the samples
        t = np.asarray(path.t, dtype=float)
        keep = t <= t_max * (1 + 1e-12)
        t = t[keep]
        xi = np.asarray(path.xi, dtype=float)[keep]
        mid = 0.5 * (xi[:-1] + xi[1:])
        return t, xi, mid
    n = max(1, int(math.ceil(t_max / dt - 1e-9)))
    t = np.linspace(0.0, t_max, n + 1)
    xi = np.array([path(tt) for tt in t], dtype=float)
    mid = np.array([path(0.5 * (a + b)) for a, b in zip(t[:-1], t[1:])], dtype=float)
    return t, xi, mid


def evolve_iota(s_init: SlitVector, path, t_max: float, points=(), cfg: IotaConfig | None = None,
                point_radius=None) -> IotaHistory:
    """Integrate iota_t on [0, t_max] along a driver or an SKLE path.

    ``point_radius`` sets the circle radius of each user point; by default
    a quarter of its initial distance to the slits, the real axis and xi(0),
    capped at ``rho_max``. Raises CircleCollision when a slit or xi(t)
    reaches a user circle.
    """
    cfg = cfg or IotaConfig()
    s0 = validate(s_init.vector) if s_init.N else s_init
    t, xi, mid = _grid_from(path, t_max, cfg.dt)
    m = cfg.n_nodes
    circ = _Circle(m)
    pts = np.atleast_1d(np.asarray(points, dtype=complex)).ravel()
    npt = pts.size

    def target_rho(x, v):
        R = distance_R(x, SlitVector(*_split(v))) if v.size else np.inf
        return min(cfg.rho_frac * R, cfg.rho_max), R

    rho, R0 = target_rho(xi[0], s0.vector)
    center = float(xi[0])
    if npt:
        if point_radius is None:
            d0 = np.minimum(slit_distance(pts, s0), pts.imag)
            d0 = np.minimum(d0, np.abs(pts - xi[0]))
            r_pts = np.minimum(cfg.rho_frac * d0, cfg.rho_max)
        else:
            r_pts = np.broadcast_to(np.asarray(point_radius, dtype=float), pts.shape).copy()
        if np.any(pts.imag <= 0):
            raise ValueError("user points must lie in the upper half-plane")
    else:
        r_pts = np.empty(0)
    pnodes = (pts[:, None] + r_pts[:, None] * circ.omega[None, :]).ravel()

    # state: centre-circle nodes, user points, user-circle nodes, a0
    w = np.concatenate([center + rho * circ.omega, pts, pnodes, [0.0]]).astype(complex)
    v = s0.vector.copy()

    def unpack(w):
        return w[:m], w[m:m + npt], w[m + npt:m + npt + m * npt].reshape(npt, m), w[-1]

    def centre_values(cvals, x):
        b = circ.coeffs(cvals)
        u = (x - center) / rho
        U = circ.eval(b, u)
        i1 = circ.eval(b, u, 1) / rho
        i2 = circ.eval(b, u, 2) / rho ** 2
        return b, complex(U), complex(i1), complex(i2)

    def extra(sol, x, wi):
        cvals, pv, pc, _ = unpack(wi)
        b, U, i1, _ = centre_values(cvals, x)
        zc = center + rho * circ.omega
        dc = circ.deriv_on_circle(b) / rho
        zs = [zc]
        if npt:
            zs += [pts, pnodes]
        H = eval_h(sol, np.concatenate(zs), check=False)
        out = np.empty_like(wi)
        out[:m] = _node_rhs(cvals, dc, zc, x, U, i1, H[:m])
        if npt:
            bp = np.fft.fft(pc, axis=1) / m
            d_pt = bp[:, 1] / r_pts
            out[m:m + npt] = _node_rhs(pv, d_pt, pts, x, U, i1, H[m:m + npt])
            d_nodes = (np.fft.ifft(circ.k * bp, axis=1) * m / circ.omega) / r_pts[:, None]
            out[m + npt:-1] = _node_rhs(pc.ravel(), d_nodes.ravel(), pnodes, x, U, i1, H[m + npt:])
        out[-1] = 2.0 * i1 * i1
        return _filter(out)


    keep = np.zeros(m, dtype=bool)
    keep[:cfg.n_keep + 1] = True

    def _filter(out):
        # project nodal derivatives onto Taylor polynomials of degree <= n_keep;
        # around a real centre iota is real on the axis, so its coefficients are real
        out[:m] = np.fft.ifft(np.where(keep, np.fft.fft(out[:m]).real, 0.0))
        if npt:
            blk = out[m + npt:-1].reshape(npt, m)
            out[m + npt:-1] = np.fft.ifft(np.where(keep, np.fft.fft(blk, axis=1), 0.0), axis=1).ravel()
        return out

    def record(w, x, v, sol=None):
        cvals, pv, _, a0 = unpack(w)
        _, U, i1, i2 = centre_values(cvals, x)
        return U, i1, i2, a0.real, pv.copy()

    n = t.size
    U = np.empty(n, complex)
    I1 = np.empty(n, complex)
    I2 = np.empty(n, complex)
    A0 = np.empty(n)
    B = np.full(n, np.nan)
    RR = np.empty(n)
    vals = np.empty((n, npt), complex)
    states = np.empty((n, v.size))
    n_re = 0
    U[0], I1[0], I2[0], A0[0], vals[0] = record(w, xi[0], v)
    states[0] = v
    RR[0] = R0
    def reseed(x, R):
        nonlocal center, rho, w, n_re
        want = min(cfg.rho_frac * R, cfg.rho_max)
        new_rho = min(want, 1.2 * rho)
        b = np.where(keep, circ.coeffs(w[:m]), 0.0)
        u = (x - center + new_rho * circ.omega) / rho
        w = w.copy()
        w[:m] = circ.eval(b, u)
        center, rho = float(x), new_rho
        n_re += 1

    def needs_reseed(lo, hi, R):
        want = min(cfg.rho_frac * R, cfg.rho_max)
        reach = max(abs(lo - center), abs(hi - center))
        return reach > 0.5 * rho or rho > 1.2 * want or rho < 0.5 * want

    on_path = hasattr(path, "dB")
    path_states = np.asarray(path.states, dtype=float)[:n] if on_path else None
    for i in range(n - 1):
        h = t[i + 1] - t[i]
        # pieces along which xi moves by at most a quarter radius
        k = max(1, int(math.ceil(abs(xi[i + 1] - xi[i]) / (0.25 * rho))))
        if k == 1:
            pieces = [(xi[i], mid[i], xi[i + 1], h)]
        else:
            tau = np.linspace(t[i], t[i + 1], k + 1)
            if on_path:
                xs = np.interp(np.linspace(0.0, 1.0, 2 * k + 1), [0.0, 1.0], [xi[i], xi[i + 1]])
            else:
                xs = np.array([path(tt) for tt in np.linspace(t[i], t[i + 1], 2 * k + 1)], dtype=float)
            pieces = [(xs[2 * j], xs[2 * j + 1], xs[2 * j + 2], tau[j + 1] - tau[j]) for j in range(k)]
        for j, (xa, xm, xb, hp) in enumerate(pieces):
            R_a = distance_R(xa, SlitVector(*_split(v))) if v.size else np.inf
            if needs_reseed(min(xa, xb), max(xa, xb), R_a):
                reseed(0.5 * (xa + xb), R_a)
            v, w, sols = rk4_slit_step(v, (xa, xm, xb), hp, cfg.kernel, extra, w)
            if j == 0:
                B[i] = bmd_from_solution(sols[0])
        if on_path and k > 1:
            # the slits belong to the path; substeps only serve the circles
            v = path_states[i + 1].copy()
        states[i + 1] = v
        x = xi[i + 1]
        s_now = SlitVector(*_split(v)) if v.size else SlitVector.empty()
        R = distance_R(x, s_now) if v.size else np.inf
        RR[i + 1] = R
        if v.size:
            if slit_distance(center, s_now) <= rho:
                raise CircleCollision(f"a slit entered the circle around xi at t={t[i + 1]:.6g}")
            if npt and np.any(slit_distance(pts, s_now) <= r_pts):
                raise CircleCollision(f"a slit entered a user-point circle at t={t[i + 1]:.6g}")
        if npt and np.any(np.abs(pts - x) <= r_pts):
            raise CircleCollision(f"xi(t) entered a user-point circle at t={t[i + 1]:.6g}")
        if abs(x - center) > 0.5 * rho:
            reseed(x, R)
        U[i + 1], I1[i + 1], I2[i + 1], A0[i + 1], vals[i + 1] = record(w, x, v)
    from .kernel import solve_kernel
    if v.size:
        B[-1] = bmd_from_solution(solve_kernel(SlitVector(*_split(v)), xi[-1], cfg.kernel))
    else:
        B[:] = 0.0
    return IotaHistory(t, xi, U.real, U.imag, I1.real, I2.real, A0, B, RR, pts, vals, states, n_re)


# half-plane chain ------------------------------------------------------------

@dataclass
class HalfPlaneChain:
    t_end: float
    points: np.ndarray
    g: np.ndarray
    swallowed_at: np.ndarray


def _drivers(times, U, a0, iota1=None):
    Us = CubicSpline(times, U)
    if iota1 is not None:
        i1 = CubicSpline(times, iota1)
        rate = lambda t: 2.0 * i1(t) ** 2  # noqa: E731
    else:
        rate = CubicSpline(times, a0).derivative()
    return Us, rate


def loewner_halfplane(times, U, a0, points, t_max: float, iota1=None, eps_swallow: float = 1e-4) -> HalfPlaneChain:
    """Integrate dg0/dt = (da0/dt) / (g0 - U) for ``points`` up to ``t_max``.

    U and a0 (or iota1, with da0/dt = 2 iota1^2) are interpolated by cubic
    splines. A point is swallowed, and frozen, once |g0 - U| <= eps_swallow.
    """
    times = np.asarray(times, dtype=float)
    a0 = np.asarray(a0, dtype=float)
    if np.any(np.diff(a0) <= 0):
        raise ValueError("a0 must be strictly increasing")
    Us, rate = _drivers(times, U, a0, iota1)
    z = np.atleast_1d(np.asarray(points, dtype=complex)).ravel()
    g = z.copy()
    sw = np.full(z.size, np.nan)
    for k, z0 in enumerate(z):
        if t_max == 0:
            break

        def rhs(t, y):
            gg = complex(y[0], y[1])
            d = rate(t) / (gg - Us(t))
            return np.array([d.real, d.imag])

        def stop(t, y):
            return "swallow" if abs(complex(y[0], y[1]) - Us(t)) <= eps_swallow else ""

        sol = dopri45(rhs, 0.0, np.array([z0.real, z0.imag]), float(t_max), rtol=1e-11, atol=1e-13, stop=stop)
        g[k] = complex(sol.y[-1, 0], sol.y[-1, 1])
        if sol.status == "stopped":
            sw[k] = sol.t[-1]
    return HalfPlaneChain(float(t_max), z, g, sw)


def hcap_halfplane(times, U, a0, t: float, rho: float = 8.0, n_probe: int = 64, iota1=None) -> float:
    """hcap in H of the transformed hull from the 1/z coefficient of g0_t."""
    if t == 0:
        return 0.0
    theta = np.pi * (np.arange(n_probe) + 0.5) / n_probe
    z = rho * np.exp(1j * theta)
    g = loewner_halfplane(times, U, a0, z, t, iota1).g
    return float(np.mean((z * (g - z)).real))


def time_change(times, a0, t):
    """(a0)^{-1}(2t): the time at which the transformed capacity equals 2t."""
    return np.interp(2.0 * np.asarray(t, dtype=float), a0, times)


def capacity_at(times, a0, t):
    return np.interp(np.asarray(t, dtype=float), times, a0)


# Ito drive -------------------------------------------------------------------

def ito_drive_check(path, hist: IotaHistory, drift_sign: float = 1.0) -> dict:
    """Compare U(t) = iota_t(xi(t)) with the Euler sum of its Ito differential

        dU = iota' alpha dB + iota' (b_BMD + b) dt + (1/2) iota'' (alpha^2 - 6) dt.

    ``drift_sign=-1`` uses b_BMD - b instead, for comparison.
    """
    n = hist.t.size
    if path.dB.size < n - 1 or not np.allclose(path.t[:n], hist.t, rtol=0, atol=1e-14):
        raise IncrementMismatch("the iota history does not run on the path's step grid")
    h = np.diff(hist.t)
    dB = path.dB[:n - 1]
    if not np.allclose(path.h[:n - 1], h, rtol=1e-12, atol=1e-15):
        raise IncrementMismatch("path step sizes disagree with the history grid")
    al = path.alpha[:n - 1]
    b = path.b[:n - 1]
    i1, i2, bmd = hist.iota1[:-1], hist.iota2[:-1], hist.bmd[:-1]
    dU = i1 * al * dB + i1 * (bmd + drift_sign * b) * h + 0.5 * i2 * (al * al - 6.0) * h
    U_int = hist.U[0] + np.concatenate([[0.0], np.cumsum(dU)])
    gap = U_int - hist.U
    return {"rms_gap": float(np.sqrt(np.mean(gap ** 2))), "max_gap": float(np.abs(gap).max()),
            "final_gap": float(gap[-1]), "U_int": U_int, "gap": gap}
