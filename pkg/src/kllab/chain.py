"""Komatu-Loewner chain: the map g_t at tracked points, hulls, tips and capacity.

Tracked points obey dg/dt = -2 pi Psi_{s(t)}(g, xi(t)) and are integrated in
one state vector together with the slits, so a single kernel solve per stage
serves every point. A point is swallowed when its image comes within
``eps_swallow`` of xi(t); it is then frozen and the integration restarts
without it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import BackwardBlowup, KLError, ProbeTooClose, StepUnderflow
from .geometry import SlitVector, slit_distance, validate
from .kernel import drift_from_solution, eval_psi, solve_kernel
from .ode import DenseSolution, RejectStep, dopri45
from .slit_ode import ODEConfig, _split, explosion_test

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChainConfig:
    ode: ODEConfig = field(default_factory=ODEConfig)
    eps_swallow: float = 1e-4
    collapse_radius: float = 1e-2  # step collapse within this distance of xi counts as swallowing
    n_probe: int = 64


@dataclass
class ChainState:
    t: float
    slits: SlitVector
    tracked: list
    tip_estimates: list = field(default_factory=list)


@dataclass
class ChainHistory:
    """Accepted steps of a chain run.

    ``g[i, k]`` is g_{t_i}(points[k]); swallowed points keep their last value.
    ``swallowed_at[k]`` is NaN for points never swallowed.
    """

    t: np.ndarray
    states: np.ndarray
    xi: np.ndarray
    g: np.ndarray
    points: np.ndarray
    swallowed_at: np.ndarray
    status: str
    driver: object
    cfg: ChainConfig
    slit_path: DenseSolution
    zeta: float | None = None

    @property
    def N(self) -> int:
        return self.states.shape[1] // 3

    def slits(self, i: int = -1) -> SlitVector:
        return SlitVector(*_split(self.states[i]))

    def state(self, i: int = -1) -> ChainState:
        t = float(self.t[i])
        tracked = [(complex(z), complex(g), None if np.isnan(ts) or ts > t else float(ts))
                   for z, g, ts in zip(self.points, self.g[i], self.swallowed_at)]
        return ChainState(t, self.slits(i), tracked)


def _check_inside(s, pts):
    if np.any(pts.imag <= 0):
        raise ValueError("tracked points must lie in the upper half-plane")
    if s.N and np.any(slit_distance(pts, s) <= 1e-12):
        raise ValueError("tracked points must not lie on a slit")


def evolve_map(s_init: SlitVector, driver, points, t_max: float, cfg: ChainConfig | None = None) -> ChainHistory:
    """Co-integrate the slit ODE and the map ODE for ``points`` over [0, t_max]."""
    cfg = cfg or ChainConfig()
    oc = cfg.ode
    s_init = validate(s_init.vector)
    pts = np.atleast_1d(np.asarray(points, dtype=complex)).ravel()
    _check_inside(s_init, pts)
    n3, npts = 3 * s_init.N, pts.size

    g_now = pts.copy()
    swallowed = np.full(npts, np.nan)
    sv = s_init.vector.copy()
    t = 0.0
    T, S, X, G = [0.0], [sv.copy()], [driver(0.0)], [g_now.copy()]
    path_t, path_y, path_f = [], [], []
    status, zeta = "Completed", None

    while True:
        # swallow anything already at xi
        xi_t = driver(t)
        near = np.isnan(swallowed) & (np.abs(g_now - xi_t) <= cfg.eps_swallow)
        swallowed[near] = t
        active = np.flatnonzero(np.isnan(swallowed))
        na = active.size

        def rhs(tt, v):
            sy, sx, sxr = _split(v[:n3])
            if n3 and (sy.min() <= 0 or np.any(sx >= sxr)):
                raise RejectStep
            g = v[n3:n3 + na] + 1j * v[n3 + na:]
            if np.any(g.imag <= 0):
                raise RejectStep
            sol = solve_kernel(SlitVector(sy, sx, sxr), driver(tt), oc.kernel)
            dg = -2.0 * np.pi * eval_psi(sol, g) if na else np.empty(0, complex)
            return np.concatenate([drift_from_solution(sol), dg.real, dg.imag])

        def cap(tt, v):
            if not n3:
                return np.inf
            s = SlitVector(*_split(v[:n3]))
            from .geometry import distance_R
            return oc.c_step * distance_R(driver(tt), s) ** 2

        def stop(tt, v):
            xi_ = driver(tt)
            if n3:
                why = explosion_test(xi_, v[:n3], oc.eps_explode)
                if why:
                    return "explode:" + why
            g = v[n3:n3 + na] + 1j * v[n3 + na:]
            if na and np.abs(g - xi_).min() <= cfg.eps_swallow:
                return "swallow"
            return ""

        v0 = np.concatenate([sv, g_now[active].real, g_now[active].imag])
        if t >= t_max:
            break
        try:
            sol = dopri45(rhs, t, v0, float(t_max), rtol=oc.rtol, atol=oc.atol, step_cap=cap, stop=stop,
                          h_min=oc.h_min, max_steps=oc.max_steps)
        except StepUnderflow as exc:
            sol = exc.solution
            _append(sol, n3, active, na, g_now, T, S, X, G, path_t, path_y, path_f, driver)
            t = float(sol.t[-1])
            sv = sol.y[-1, :n3].copy()
            d = np.abs(g_now[active] - driver(t))
            k = int(np.argmin(d)) if na else -1
            if na and d[k] <= cfg.collapse_radius:
                log.debug("step collapse at t=%.6g: point %d swallowed", t, active[k])
                swallowed[active[k]] = t
                continue
            raise
        _append(sol, n3, active, na, g_now, T, S, X, G, path_t, path_y, path_f, driver)
        t = float(sol.t[-1])
        sv = sol.y[-1, :n3].copy()
        if sol.status == "stopped" and sol.info["stop"].startswith("explode"):
            status, zeta = "Exploded", t
            break
        if sol.status == "max_steps":
            status = "Failed"
            break
        if sol.status != "stopped":
            break

    if not path_t:  # no step taken
        f0 = np.zeros(n3) if not n3 else drift_from_solution(solve_kernel(s_init, driver(0.0), oc.kernel))
        path_t, path_y, path_f = [np.array([0.0])], [s_init.vector[None]], [f0[None]]
    slit_path = DenseSolution(np.concatenate(path_t), np.concatenate(path_y), np.concatenate(path_f))
    return ChainHistory(np.array(T), np.array(S), np.array(X, dtype=float), np.array(G), pts, swallowed,
                        status, driver, cfg, slit_path, zeta)


def _append(sol, n3, active, na, g_now, T, S, X, G, path_t, path_y, path_f, driver):
    first = 0 if not path_t else 1  # segment start repeats the previous end
    path_t.append(sol.t[first:])
    path_y.append(sol.y[first:, :n3])
    path_f.append(sol.f[first:, :n3])
    for i in range(1, len(sol.t)):
        g_now[active] = sol.y[i, n3:n3 + na] + 1j * sol.y[i, n3 + na:]
        T.append(float(sol.t[i]))
        S.append(sol.y[i, :n3].copy())
        X.append(driver(float(sol.t[i])))
        G.append(g_now.copy())


def hull_at(history: ChainHistory, t: float) -> np.ndarray:
    """Initial positions of tracked points swallowed by time t."""
    if not (0 <= t <= history.t[-1] * (1 + 1e-12)):
        raise ValueError(f"t={t} outside the history [0, {history.t[-1]}]")
    sw = history.swallowed_at
    return history.points[~np.isnan(sw) & (sw <= t)]


def _slits_at(path: DenseSolution, tau, n3):
    if not n3:
        return SlitVector.empty()
    return SlitVector(*_split(np.asarray(path(tau))))


def flow_points(history: ChainHistory, points, t_end: float, rtol=None, atol=None) -> np.ndarray:
    """g_{t_end} at new points, reusing the stored slit path."""
    oc = history.cfg.ode
    n3 = 3 * history.N
    z = np.atleast_1d(np.asarray(points, dtype=complex)).ravel()
    if t_end == 0:
        return z.copy()
    n = z.size
    drv = history.driver

    def rhs(tt, v):
        g = v[:n] + 1j * v[n:]
        if np.any(g.imag <= 0):
            raise RejectStep
        sol = solve_kernel(_slits_at(history.slit_path, tt, n3), drv(tt), oc.kernel)
        dg = -2.0 * np.pi * eval_psi(sol, g)
        return np.concatenate([dg.real, dg.imag])

    sol = dopri45(rhs, 0.0, np.concatenate([z.real, z.imag]), float(t_end), rtol=rtol or oc.rtol,
                  atol=atol or oc.atol, h_min=oc.h_min)
    return sol.y[-1, :n] + 1j * sol.y[-1, n:]


def trace_tip(s_init: SlitVector, driver, t: float, delta: float = 1e-3, history: ChainHistory | None = None,
              cfg: ChainConfig | None = None) -> complex:
    """Approximate gamma(t) by flowing xi(t) + i delta backwards to time 0.

    Heuristic: the hull need not be generated by a curve.
    """
    if history is None:
        history = evolve_map(s_init, driver, [], t, cfg)
    elif t > history.t[-1] * (1 + 1e-12):
        raise ValueError("t beyond the stored slit path")
    w0 = complex(driver(t)) + 1j * delta
    if t == 0:
        return w0
    oc = history.cfg.ode
    n3 = 3 * history.N
    path = history.slit_path

    def rhs(u, v):
        w = complex(v[0], v[1])
        if w.imag <= 0:
            raise RejectStep
        tau = t - u
        sol = solve_kernel(_slits_at(path, tau, n3), driver(tau), oc.kernel)
        dw = 2.0 * np.pi * eval_psi(sol, w)
        return np.array([dw.real, dw.imag])

    try:
        sol = dopri45(rhs, 0.0, np.array([w0.real, w0.imag]), float(t), rtol=oc.rtol, atol=oc.atol,
                      h_min=oc.h_min)
    except (StepUnderflow, KLError) as exc:
        raise BackwardBlowup(f"backward flow left the domain: {exc}") from exc
    return complex(sol.y[-1, 0], sol.y[-1, 1])


def hcap_estimate(history: ChainHistory, t: float, rho: float | None = None) -> float:
    """Half-plane capacity of F_t relative to D from the Laurent coefficient of g_t.

    Probes sit at ``n_probe`` angles in the upper half of |z| = rho; with
    their mirror images they form an equispaced circle, on which the mean
    of z (g(z) - z) is the 1/z coefficient.
    """
    if t == 0:
        return 0.0
    s0 = history.slits(0)
    hull = hull_at(history, t)
    pts = np.concatenate([s0.left, s0.right, hull, [0.0]])
    diam = float(np.abs(pts[:, None] - pts[None, :]).max()) if pts.size > 1 else 0.0
    # the hull is only known through tracked points; include the slit motion as well
    if rho is None:
        rho = max(8.0, 4.0 * diam)
    if rho < 4.0 * diam:
        raise ProbeTooClose(f"probe radius {rho} below 4 x diameter {diam:.4g}")
    m = history.cfg.n_probe
    theta = np.pi * (np.arange(m) + 0.5) / m
    z = rho * np.exp(1j * theta)
    g = flow_points(history, z, t, rtol=1e-10, atol=1e-12)
    return float(np.mean((z * (g - z)).real))
