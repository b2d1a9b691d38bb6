"""Stochastic Komatu-Loewner evolution: d xi = alpha dB + b dt coupled to the slit ODE.

The driver is advanced by Euler-Maruyama. Since s has finite variation, its
covariation with B vanishes and a Milstein correction would be zero, so
nothing is gained over Euler-Maruyama for a state-dependent alpha. Over each
step the slits take one RK4 step with xi interpolated linearly between the
step's endpoints, which makes the slit path the exact ODE solution for the
piecewise-linear driver through the sampled values (up to RK4 error).

Steps are bisected when they exceed ``c_sub * R^2`` or leave the
configuration space; the half-step increments come from a Brownian bridge
whose normals are keyed by (seed, step, level, index), so results never
depend on scheduling.
"""

from __future__ import annotations

import concurrent.futures as cf
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import KLError, StepUnderflow
from .geometry import SlitVector, distance_R, scale, translate, validate
from .kernel import KernelConfig, bmd_from_solution, eval_h, solve_kernel
from .slit_ode import StepRejected, Trajectory, _split, explosion_test, rk4_slit_step, write_rows

log = logging.getLogger(__name__)


# coefficients ---------------------------------------------------------------

class Coefficient:
    """A function of the slit configuration seen from the driving point.

    ``__call__(s)`` takes s with the driving point at 0; ``at(xi0, s)``
    evaluates f(translate(s, -xi0)). ``degree`` is the homogeneity degree.
    """

    degree = 0
    name = "coef"

    def __call__(self, s: SlitVector) -> float:
        raise NotImplementedError

    def at(self, xi0: float, s: SlitVector, sol=None) -> float:
        return self(translate(s, -xi0))

    def __repr__(self):
        return self.name


class Const(Coefficient):
    degree = 0

    def __init__(self, value: float):
        if value < 0:
            raise ValueError("alpha must be nonnegative")
        self.value = float(value)
        self.name = f"const:{self.value!r}"

    def __call__(self, s):
        return self.value

    def at(self, xi0, s, sol=None):
        return self.value


class Zero(Coefficient):
    degree = -1
    name = "zero"

    def __call__(self, s):
        return 0.0

    def at(self, xi0, s, sol=None):
        return 0.0


class BmdConstant(Coefficient):
    """lam * b_BMD; uses the kernel solution at (s, xi0) directly when one is at hand.

    b_BMD is translation invariant, so this equals the translated evaluation
    up to rounding and saves a kernel solve per step.
    """

    degree = -1

    def __init__(self, lam: float = 1.0, kernel: KernelConfig | None = None):
        self.lam = float(lam)
        self.kernel = kernel
        self.name = f"bmd:{self.lam!r}"

    def __call__(self, s):
        return self.lam * bmd_from_solution(solve_kernel(s, 0.0, self.kernel))

    def at(self, xi0, s, sol=None):
        if sol is None:
            sol = solve_kernel(s, xi0, self.kernel)
        return self.lam * bmd_from_solution(sol)


def parse_coefficient(text: str, kind: str) -> Coefficient:
    """``const:2.449``, ``zero`` or ``bmd:-1`` (``kind`` is "alpha" or "b")."""
    head, _, arg = text.partition(":")
    if head == "const":
        if kind != "alpha":
            raise ValueError("const is a degree-0 coefficient and can only be used for alpha")
        return Const(float(arg))
    if head == "zero":
        return Const(0.0) if kind == "alpha" else Zero()
    if head == "bmd":
        if kind != "b":
            raise ValueError("bmd is a degree -1 coefficient and can only be used for b")
        return BmdConstant(float(arg) if arg else 1.0)
    raise ValueError(f"unknown coefficient {text!r}")


@dataclass
class CoefficientSpec:
    alpha: Coefficient = field(default_factory=lambda: Const(0.0))
    b: Coefficient = field(default_factory=Zero)

    def check(self, n_probe: int = 8, seed: int = 0, tol: float = 1e-8) -> dict:
        """Check nonnegativity of alpha and the declared homogeneity on random probes."""
        rng = np.random.default_rng(seed)
        worst = {"alpha": 0.0, "b": 0.0}
        for _ in range(n_probe):
            s = random_slits(rng, r=0.3)
            c = float(rng.uniform(0.3, 3.0))
            for key, f, deg in (("alpha", self.alpha, 0), ("b", self.b, -1)):
                base, scaled = f(s), f(scale(s, c))
                if key == "alpha" and base < 0:
                    raise ValueError("alpha is negative on a probe")
                err = abs(scaled - c ** deg * base) / max(abs(base), 1e-300) if base else abs(scaled)
                worst[key] = max(worst[key], err)
        worst["ok"] = worst["alpha"] <= tol and worst["b"] <= tol
        return worst


def random_slits(rng, r: float, n_max: int = 3, spread: float = (1.0, 1.3)) -> SlitVector:
    """Random configuration scaled so that R(0, s) lies in r * [spread]."""
    while True:
        n = int(rng.integers(1, n_max + 1))
        y = rng.uniform(0.2, 2.0, n)
        x = rng.uniform(-2.5, 2.0, n)
        L = rng.uniform(0.1, 2.5, n)
        try:
            s = validate(y, x, x + L)
        except KLError:
            continue
        if n > 1:
            from .slit_ode import _slit_gap
            if _slit_gap(s.y, s.x, s.xr) < 0.05 * s.y.min():
                continue
        R = distance_R(0.0, s)
        return scale(s, r * rng.uniform(*spread) / R)


# sampling ------------------------------------------------------------------

@dataclass(frozen=True)
class SkleConfig:
    """Sampler settings.

    A slit whose height falls below ``eps_height`` while its width is below
    ``point_frac`` times its distance to xi has all but closed up; it is
    then carried as a point slit (see :func:`sample_path`). A low slit that
    is still wide ends the run as a "height" explosion.
    """

    c_sub: float = 10.0
    eps_explode: float = 1e-3
    eps_height: float = 1e-6
    point_frac: float = 1e-3
    h_min: float = 1e-12
    kernel: KernelConfig = field(default_factory=KernelConfig)


@dataclass
class SkleTrajectory(Trajectory):
    """Trajectory plus the increments and coefficient values of every substep.

    Row i of ``dB``, ``h``, ``alpha``, ``b`` belongs to the step from t[i] to t[i+1].
    ``point_slits`` lists ``(slit index, time)`` for slits carried as points
    from that time on.
    """

    dB: np.ndarray = field(default_factory=lambda: np.empty(0))
    h: np.ndarray = field(default_factory=lambda: np.empty(0))
    alpha: np.ndarray = field(default_factory=lambda: np.empty(0))
    b: np.ndarray = field(default_factory=lambda: np.empty(0))
    seed: object = None
    dt: float = 0.0
    point_slits: list = field(default_factory=list)

    def write_csv(self, target):
        n = self.N
        header = (["t"] + [f"y_{j + 1}" for j in range(n)] + [f"x_{j + 1}" for j in range(n)]
                  + [f"xr_{j + 1}" for j in range(n)] + ["xi", "R", "dB"])
        dB = np.append(self.dB, np.nan)
        write_rows(target, header, np.column_stack([self.t, self.states, self.xi, self.R, dB]))


def _min_R(xa, xb, sa, sb):
    xm = 0.5 * (xa + xb)
    return min(distance_R(xa, sa), distance_R(xb, sb), distance_R(xm, sa), distance_R(xm, sb))


def _gentle(va, vb):
    """No height or width may lose more than half its size in one step."""
    ya, xa, ra = _split(va)
    yb, xb, rb = _split(vb)
    return bool(np.all(yb > 0.5 * ya) and np.all(rb - xb > 0.5 * (ra - xa)))


def _point_rates(sol, xi, w):
    """Rates of (log height, centre, log width) of point slits.

    A slit of size << its distance to xi moves like the boundary point c
    under F = -2 pi Psi of the other slits: c' = Re F(c), and its height
    and width scale by the stretch d/dx Re F(c). Its own influence on the
    rest is of order (size / distance)^2 and is dropped.
    """
    k = w.size // 3
    c = w[k:2 * k]
    d = c - xi
    if sol.s.N:
        eps = 1e-6 * (1.0 + np.abs(c))
        hp = eval_h(sol, np.concatenate([c, c + eps, c - eps]).astype(complex), check=False).real
        H, dH = hp[:k], (hp[k:2 * k] - hp[2 * k:]) / (2 * eps)
    else:
        H = dH = np.zeros(k)
    stretch = -2.0 / (d * d) - 2.0 * np.pi * dH
    return np.concatenate([stretch, 2.0 / d - 2.0 * np.pi * H, stretch])


def _seed_list(seed):
    return list(seed) if isinstance(seed, (tuple, list)) else [int(seed)]


def base_increments(seed, n: int, dt: float) -> np.ndarray:
    rng = np.random.default_rng(_seed_list(seed))
    return rng.standard_normal(n) * math.sqrt(dt)


def sample_path(w_init, coeffs: CoefficientSpec, t_max: float, dt: float, seed=0,
                cfg: SkleConfig | None = None, increments=None) -> SkleTrajectory:
    """Sample one path of the SKLE system from ``w_init = (xi0, s0)``.

    ``increments`` overrides the base Brownian increments (one per step of
    size dt), e.g. to share a refinement hierarchy across step sizes.

    When the hull nearly encloses a slit, the slit's image shrinks towards a
    point on the real axis long before xi reaches it; its height decays like
    exp(-2 int dt / |x - xi|^2). Such a slit is carried as a point slit (see
    :class:`SkleConfig`) in log coordinates, so the run can continue until
    R, which still includes it, drops below ``eps_explode``.
    """
    cfg = cfg or SkleConfig()
    if not dt > 0 or not t_max > 0:
        raise ValueError("dt and t_max must be positive")
    xi0, s0 = w_init
    s0 = validate(s0.vector)
    nsteps = int(math.ceil(t_max / dt - 1e-12))
    dB = base_increments(seed, nsteps, dt) if increments is None else np.asarray(increments, dtype=float)
    if dB.size < nsteps:
        raise ValueError(f"need {nsteps} increments, got {dB.size}")
    seeds = _seed_list(seed)
    N = s0.N

    rec = {"t": [0.0], "v": [s0.vector.copy()], "xi": [float(xi0)], "dB": [], "h": [], "alpha": [], "b": []}
    # va: active slits in (y, x, xr) layout; w: point slits as (log y, centre, log width)
    state = {"t": 0.0, "va": s0.vector.copy(), "w": np.empty(0), "act": np.arange(N), "pts": np.empty(0, int),
             "xi": float(xi0), "why": ""}
    points = []

    def full(va, w):
        """All slits in their original order."""
        y, x, xr = np.empty(N), np.empty(N), np.empty(N)
        ya, xa, ra = _split(va)
        act, pts = state["act"], state["pts"]
        y[act], x[act], xr[act] = ya, xa, ra
        if pts.size:
            k = pts.size
            half = 0.5 * np.exp(w[2 * k:])
            y[pts], x[pts], xr[pts] = np.exp(w[:k]), w[k:2 * k] - half, w[k:2 * k] + half
        return SlitVector(y, x, xr)

    def one(h, D):
        va, w, xi = state["va"], state["w"], state["xi"]
        s = SlitVector(*_split(va)) if va.size else SlitVector.empty()
        sol = solve_kernel(s, xi, cfg.kernel)
        a = coeffs.alpha.at(xi, s, sol)
        bb = coeffs.b.at(xi, s, sol)
        xi_new = xi + a * D + bb * h
        if not N:
            return va, w, xi_new, a, bb
        xis = (xi, 0.5 * (xi + xi_new), xi_new)
        if w.size:
            va_new, w_new, _ = rk4_slit_step(va, xis, h, cfg.kernel, _point_rates, w)
        else:
            va_new, w_new = rk4_slit_step(va, xis, h, cfg.kernel)[0], w
        return va_new, w_new, xi_new, a, bb

    def points_gentle(w, w_new, xi):
        if not w.size:
            return True
        k = w.size // 3
        c = w[k:2 * k]
        return bool(np.all(np.abs(w_new[:k] - w[:k]) <= 1.0)
                    and np.all(np.abs(w_new[k:2 * k] - c) <= 0.25 * np.abs(c - xi)))

    def absorb(xi):
        """Turn low, short active slits into point slits; '' or the reason to stop."""
        va = state["va"]
        y, x, xr = _split(va)
        low = y <= cfg.eps_height
        if not low.any():
            return ""
        s = SlitVector(y, x, xr)
        for j in np.flatnonzero(low):
            one_slit = SlitVector(y[j:j + 1], x[j:j + 1], xr[j:j + 1])
            if xr[j] - x[j] > cfg.point_frac * distance_R(xi, one_slit):
                return "height"
        keep = ~low
        added = (np.log(y[low]), 0.5 * (x[low] + xr[low]), np.log(xr[low] - x[low]))
        parts = [np.concatenate([old, new]) for old, new in zip(np.split(state["w"], 3), added)]
        for j in state["act"][low]:
            points.append((int(j), state["t"]))
        state["pts"] = np.concatenate([state["pts"], state["act"][low]])
        state["act"] = state["act"][keep]
        state["w"] = np.concatenate(parts)
        state["va"] = np.concatenate([y[keep], x[keep], xr[keep]])
        log.debug("slits %s carried as points from t=%.12g (R=%.3g)", state["pts"].tolist(), state["t"],
                  distance_R(xi, s))
        return ""

    def advance(n, level, idx, h, D):
        if state["why"]:
            return
        va, w, xi = state["va"], state["w"], state["xi"]
        s = full(va, w) if N else None
        R = distance_R(xi, s) if N else np.inf
        split = h > cfg.c_sub * R * R
        if not split:
            try:
                va_new, w_new, xi_new, a, bb = one(h, D)
            except (StepRejected, KLError):
                split = True
            else:
                # the step must also be short for the closest approach along it
                split = bool(N) and (h > cfg.c_sub * _min_R(xi, xi_new, s, full(va_new, w_new)) ** 2
                                     or not _gentle(va, va_new) or not points_gentle(w, w_new, xi))
        if split:
            if h / 2 < cfg.h_min:
                raise StepUnderflow(f"SKLE substep below {cfg.h_min:g} at t={state['t']:.12g}")
            z = np.random.default_rng(seeds + [n, level, idx]).standard_normal()
            D1 = 0.5 * D + 0.5 * math.sqrt(h) * z
            advance(n, level + 1, 2 * idx, h / 2, D1)
            advance(n, level + 1, 2 * idx + 1, h / 2, D - D1)
            return
        state["t"] += h
        state["va"], state["w"], state["xi"] = va_new, w_new, xi_new
        for k, val in (("t", state["t"]), ("v", full(va_new, w_new).vector), ("xi", xi_new), ("dB", D), ("h", h),
                       ("alpha", a), ("b", bb)):
            rec[k].append(val)
        if N:
            if distance_R(xi_new, full(va_new, w_new)) < cfg.eps_explode:
                state["why"] = "R"
            else:
                state["why"] = absorb(xi_new) or (
                    explosion_test(xi_new, state["va"], cfg.eps_explode, cfg.eps_height) if state["va"].size else "")

    status, zeta, reason = "Completed", None, ""
    for n in range(nsteps):
        h = t_max - state["t"] if n == nsteps - 1 else dt
        try:
            advance(n, 0, 0, h, dB[n])
        except StepUnderflow as exc:
            status, reason = "Failed", str(exc)
            break
        if state["why"]:
            status, zeta, reason = "Exploded", state["t"], state["why"]
            break
    t = np.array(rec["t"])
    states = np.array(rec["v"]).reshape(len(t), -1)
    xi = np.array(rec["xi"])
    R = np.array([distance_R(x, SlitVector(*_split(v))) if v.size else np.inf for x, v in zip(xi, states)])
    return SkleTrajectory(t, states, xi, R, status, zeta, reason, None,
                          np.array(rec["dB"]), np.array(rec["h"]), np.array(rec["alpha"]), np.array(rec["b"]),
                          seed, dt, points)


# Monte Carlo ----------------------------------------------------------------

def wilson_interval(k: int, n: int, z: float = 1.959963984540054):
    if n == 0:
        return (0.0, 1.0)
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return (max(0.0, mid - half), min(1.0, mid + half))


@dataclass(frozen=True)
class PathResult:
    index: int
    seed: tuple
    status: str
    zeta: float | None
    final_R: float
    min_R: float
    y0: float
    n_steps: int
    reason: str


def _run_one(args):
    i, w_init, coeffs, T, dt, seed, cfg, keep = args
    try:
        tr = sample_path(w_init, coeffs, T, dt, seed, cfg)
    except KLError as exc:  # counted, not fatal
        return PathResult(i, tuple(seed), "Failed", None, float("nan"), float("nan"), w_init[1].y0, 0,
                          f"{exc.module}: {exc}"), None
    res = PathResult(i, tuple(seed), tr.status, tr.zeta, float(tr.R[-1]), float(tr.R.min()), w_init[1].y0,
                     len(tr.t) - 1, tr.reason)
    return res, (tr if keep else None)


def mc_explosion(w_init, coeffs: CoefficientSpec, T: float, n_paths: int, base_seed: int = 0, dt: float = 1e-2,
                 cfg: SkleConfig | None = None, jobs: int = 1, keep_paths: bool = False, bins: int = 20) -> dict:
    """Run ``n_paths`` independent paths and aggregate explosion statistics.

    Path i uses seed (base_seed, i). Results are ordered by path index, so
    the summary does not depend on ``jobs``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    cfg = cfg or SkleConfig()
    tasks = [(i, w_init, coeffs, T, dt, (int(base_seed), i), cfg, keep_paths) for i in range(n_paths)]
    if jobs > 1:
        with cf.ProcessPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(_run_one, tasks, chunksize=max(1, n_paths // (4 * jobs))))
    else:
        out = [_run_one(t) for t in tasks]
    results = [r for r, _ in out]
    paths = [p for _, p in out] if keep_paths else None
    exploded = [r for r in results if r.status == "Exploded"]
    failed = [r for r in results if r.status == "Failed"]
    k = len(exploded)
    zetas = np.array([r.zeta for r in exploded])
    finals = np.array([r.final_R for r in exploded])
    hist_counts, hist_edges = np.histogram(zetas, bins=bins, range=(0.0, T)) if k else (np.zeros(bins, int),
                                                                                         np.linspace(0, T, bins + 1))
    y0 = w_init[1].y0
    summary = {
        "n_paths": n_paths,
        "n_exploded": k,
        "n_failed": len(failed),
        "p_hat": k / n_paths,
        "ci95": list(wilson_interval(k, n_paths)),
        "zeta_quantiles": (np.quantile(zetas, [0.0, 0.1, 0.5, 0.9, 1.0]).tolist() if k else []),
        "zeta_hist": {"edges": hist_edges.tolist(), "counts": hist_counts.tolist()},
        "tail_R": ({"max": float(finals.max()), "median": float(np.median(finals))} if k else {}),
        "all_final_R_below_eps": bool(np.all(finals <= cfg.eps_explode)) if k else True,
        "zeta_lower_bound": 2.0 * y0 * y0,
        "n_zeta_below_bound": int(np.sum(zetas < 2.0 * y0 * y0 * 0.99)) if k else 0,
        "min_zeta": float(zetas.min()) if k else None,
        "failures": [r.reason for r in failed],
        "paths": [r.__dict__ for r in results],
    }
    if keep_paths:
        summary["trajectories"] = paths
    return summary


def probe_condition_B(f, r: float, n_samples: int = 200, seed: int = 0) -> dict:
    """Largest |f(s)| over random s with R(0, s) > r, sampled near R = r.

    Sampling can refute boundedness but never certify it; ``growing`` flags
    a sup that still rises by more than 5% in the last sample doubling.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    rng = np.random.default_rng(seed)
    vals = np.empty(n_samples)
    for i in range(n_samples):
        s = random_slits(rng, r)
        vals[i] = np.max(np.abs(np.atleast_1d(f(s))))
    sups = []
    m = n_samples
    while m >= 1:
        sups.append(float(vals[:m].max()))
        m //= 2
    sups = sups[::-1]
    growing = len(sups) > 1 and sups[-1] > 1.05 * sups[-2]
    return {"sup": float(vals.max()), "sups_by_doubling": sups, "growing": bool(growing), "r": r,
            "n_samples": n_samples, "heuristic": True}
