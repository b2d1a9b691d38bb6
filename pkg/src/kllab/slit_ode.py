"""Slit motion ds/dt = b(xi(t), s(t)) under a deterministic driver, with explosion detection."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NotExploded, StepUnderflow
from .geometry import SlitVector, distance_R, validate
from .kernel import KernelConfig, drift_b, drift_from_solution, solve_kernel
from .ode import DenseSolution, RejectStep, dopri45

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ODEConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    c_step: float = 10.0
    eps_explode: float = 1e-3
    h_min: float = 1e-12
    max_steps: int = 200_000
    kernel: KernelConfig = field(default_factory=KernelConfig)


@dataclass
class Trajectory:
    """Accepted states of a slit evolution.

    ``status`` is "Completed", "Exploded" or "Failed"; ``zeta`` is set when
    the run exploded and ``reason`` says which test fired.
    """

    t: np.ndarray
    states: np.ndarray
    xi: np.ndarray
    R: np.ndarray
    status: str
    zeta: float | None = None
    reason: str = ""
    dense: DenseSolution | None = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.states.shape[1] // 3

    def slits(self, i: int = -1) -> SlitVector:
        v = self.states[i]
        n = self.N
        return SlitVector(v[:n], v[n:2 * n], v[2 * n:])

    def state_at(self, t):
        """Cubic Hermite interpolation of the state vector."""
        if self.dense is None:
            raise ValueError("trajectory carries no dense output")
        return self.dense(t)

    def resample(self, times) -> np.ndarray:
        return np.atleast_2d(self.state_at(np.asarray(times, dtype=float)))

    def write_csv(self, target):
        """Write the CSV to a path or an open text stream, 17 significant digits."""
        n = self.N
        header = (["t"] + [f"y_{j + 1}" for j in range(n)] + [f"x_{j + 1}" for j in range(n)]
                  + [f"xr_{j + 1}" for j in range(n)] + ["xi", "R"])
        write_rows(target, header, np.column_stack([self.t, self.states, self.xi, self.R]))


def write_rows(target, header, rows):
    if hasattr(target, "write"):
        w = csv.writer(target, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" for v in row])
        return
    with open(target, "w", newline="") as fh:
        write_rows(fh, header, rows)


def _split(v):
    n = v.size // 3
    return v[:n], v[n:2 * n], v[2 * n:]


def _slit_gap(y, x, xr):
    """Smallest distance between two distinct slits (inf for N < 2)."""
    n = y.size
    if n < 2:
        return np.inf
    dx = np.maximum(0.0, np.maximum(x[:, None] - xr[None, :], x[None, :] - xr[:, None]))
    d = np.hypot(dx, y[:, None] - y[None, :])
    d[np.diag_indices(n)] = np.inf
    return float(d.min())


def explosion_test(xi0, v, eps, eps_height=None):
    """Name of the first explosion test that fires, or ''."""
    y, x, xr = _split(v)
    s = SlitVector(y, x, xr)
    if distance_R(xi0, s) < eps:
        return "R"
    if y.min() <= (eps if eps_height is None else eps_height):
        return "height"
    if _slit_gap(y, x, xr) <= eps:
        return "collision"
    return ""


def evolve_slits(s_init: SlitVector, driver, t_max: float, cfg: ODEConfig | None = None,
                 drift=None) -> Trajectory:
    """Integrate the slit ODE on [0, t_max].

    ``drift(s, xi0)`` defaults to the kernel drift. Steps are capped at
    ``c_step * R^2``. The run stops as Exploded once R, a height, or a gap
    between slits drops below ``eps_explode``.
    """
    cfg = cfg or ODEConfig()
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    s_init = validate(s_init.vector)
    if drift is None:
        def drift(s, xi0):
            return drift_b(s, xi0, cfg.kernel)
    n = s_init.N
    if n == 0:
        t = np.array([0.0, float(t_max)])
        xi = np.array([driver(0.0), driver(float(t_max))], dtype=float)
        st = np.zeros((2, 0))
        dense = DenseSolution(t, st, st)
        return Trajectory(t, st, xi, np.full(2, np.inf), "Completed", dense=dense)

    def rhs(t, v):
        y, x, xr = _split(v)
        if y.min() <= 0 or np.any(x >= xr):
            raise RejectStep
        return drift(SlitVector(y, x, xr), driver(t))

    def cap(t, v):
        y, x, xr = _split(v)
        return cfg.c_step * distance_R(driver(t), SlitVector(y, x, xr)) ** 2

    def stop(t, v):
        return explosion_test(driver(t), v, cfg.eps_explode)

    why = explosion_test(driver(0.0), s_init.vector, cfg.eps_explode)
    if why:
        sol = DenseSolution(np.array([0.0]), s_init.vector[None, :], rhs(0.0, s_init.vector)[None, :],
                            "stopped", {"stop": why})
    else:
        try:
            sol = dopri45(rhs, 0.0, s_init.vector, float(t_max), rtol=cfg.rtol, atol=cfg.atol, step_cap=cap,
                          stop=stop, h_min=cfg.h_min, max_steps=cfg.max_steps)
        except StepUnderflow as exc:
            part = exc.solution
            exc.trajectory = _package(part, driver, "Failed", reason=str(exc))
            raise
    if sol.status == "stopped":
        return _package(sol, driver, "Exploded", zeta=float(sol.t[-1]), reason=sol.info["stop"])
    if sol.status == "max_steps":
        return _package(sol, driver, "Failed", reason=f"max_steps={cfg.max_steps} reached")
    return _package(sol, driver, "Completed")


def _package(sol, driver, status, zeta=None, reason=""):
    xi = np.array([driver(t) for t in sol.t], dtype=float)
    R = np.array([distance_R(x, SlitVector(*_split(v))) for x, v in zip(xi, sol.y)])
    return Trajectory(sol.t, sol.y, xi, R, status, zeta, reason, sol)


def explosion_report(traj: Trajectory) -> dict:
    """Explosion time, R over the last 10% of the lifetime, and final minimal height."""
    if traj.status != "Exploded":
        raise NotExploded(f"trajectory status is {traj.status}")
    zeta = traj.zeta
    tail = traj.t >= 0.9 * zeta
    if tail.sum() < 2:
        tail[-2:] = True
    y, _, _ = _split(traj.states[-1])
    return {"zeta": zeta, "t_tail": traj.t[tail], "R_tail": traj.R[tail], "min_height": float(y.min()),
            "reason": traj.reason}


def comparison_lower_bound(y0: float) -> float:
    """Lifetime 2 y0^2 of the comparison solution Y' = -1/Y started at y0."""
    if not y0 > 0:
        raise ValueError("y0 must be positive")
    return 2.0 * y0 * y0


class StepRejected(Exception):
    """A stage state left the configuration space."""


def rk4_slit_step(v, xis, h, kcfg, extra=None, extra_state=None):
    """One classical RK4 step of the slit ODE.

    ``xis = (xi(t), xi(t + h/2), xi(t + h))`` are the driver values at the
    stage times. ``extra(sol, xi, w)`` may supply the derivative of a
    co-integrated state ``w`` from each stage's kernel solution.
    Returns ``(v_new, w_new, stage_solutions)``.
    """
    stage_xi = (xis[0], xis[1], xis[1], xis[2])
    cs = (0.0, 0.5, 0.5, 1.0)
    kv, kw, sols = [], [], []
    for i in range(4):
        vi = v if i == 0 else v + cs[i] * h * kv[-1]
        if vi.size:
            y, x, xr = _split(vi)
            if y.min() <= 0 or np.any(x >= xr):
                raise StepRejected
            s = SlitVector(y, x, xr)
        else:
            s = SlitVector.empty()
        sol = solve_kernel(s, stage_xi[i], kcfg)
        sols.append(sol)
        kv.append(drift_from_solution(sol))
        if extra is not None:
            wi = extra_state if i == 0 else extra_state + cs[i] * h * kw[-1]
            kw.append(extra(sol, stage_xi[i], wi))
    v_new = v + h / 6.0 * (kv[0] + 2 * kv[1] + 2 * kv[2] + kv[3])
    w_new = None
    if extra is not None:
        w_new = extra_state + h / 6.0 * (kw[0] + 2 * kw[1] + 2 * kw[2] + kw[3])
    return v_new, w_new, sols
