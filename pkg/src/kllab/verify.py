"""Registered invariant suites.

Each suite returns a list of :class:`Check` records (observed value, bound,
pass flag). ``quick=True`` shrinks sample sizes for smoke runs; the default
sizes are the ones the acceptance tests use.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .chain import ChainConfig, evolve_map, hcap_estimate
from .drivers import DeterministicDriver
from .errors import UnknownSuite
from .geometry import SlitVector, scale, slit_distance, validate
from .kernel import bmd_from_solution, eval_psi, psi_endpoints, solve_kernel
from .oracle import LatticeConfig, oracle_kernel_fd
from .skle import (BmdConstant, CoefficientSpec, Const, SkleConfig, base_increments, mc_explosion, random_slits,
                   sample_path)
from .slit_ode import ODEConfig, comparison_lower_bound, evolve_slits, explosion_report
from .transform import evolve_iota, ito_drive_check, loewner_halfplane

log = logging.getLogger(__name__)


@dataclass
class Check:
    name: str
    passed: bool
    observed: float
    bound: float
    detail: dict = field(default_factory=dict)


def _check(name, observed, bound, ok=None, **detail):
    observed = float(observed)
    ok = observed <= bound if ok is None else ok
    return Check(name, bool(ok), observed, float(bound), detail)


# reference configurations ------------------------------------------------------

def single_slit(y=1.0, half=1.0, x0=0.0) -> SlitVector:
    return validate([y], [x0 - half], [x0 + half])


def sample_configs():
    """A few fixed configurations with one and two slits."""
    return [
        (single_slit(), 0.0),
        (validate([1.0, 0.5], [-1.0, 0.5], [0.0, 1.5]), 0.2),
        (validate([0.6, 0.6], [-1.2, 0.4], [-0.2, 1.0]), -0.1),
    ]


def interior_probes(s: SlitVector, n: int, rng, margin: float = 0.05):
    """Random points of D(s) in a box around the slits, away from them and the axis."""
    span = max(4.0, 2.0 * s.diameter()) if s.N else 4.0
    out = []
    while len(out) < n:
        z = rng.uniform(-span, span, 2 * n) + 1j * rng.uniform(margin, span, 2 * n)
        if s.N:
            z = z[slit_distance(z, s) > margin]
        out.extend(z.tolist())
    return np.array(out[:n])


def explosion_scenarios():
    """Ten deterministic scenarios with xi held under a slit; lowest heights span 0.3 to 2."""
    out = []
    y0s = np.linspace(0.3, 2.0, 10)
    for k, y0 in enumerate(y0s):
        half = y0 * (0.6, 1.0, 1.6)[k % 3]
        x0 = 0.3 * half * (-1) ** k
        if k % 4 == 3:
            # a second, higher slit off to the side
            s = validate([y0, 1.5 * y0], [x0 - half, x0 + half + 0.5 * y0], [x0 + half, x0 + 2 * half + 0.5 * y0])
        else:
            s = single_slit(y0, half, x0)
        if k % 2:
            drv = DeterministicDriver.expression(f"{0.2 * half:.6g}*sin({1.0 / y0 ** 2:.6g}*t)")
        else:
            drv = DeterministicDriver.constant(0.0)
        out.append((f"y0={y0:.3g}", s, drv))
    return out


# suites ------------------------------------------------------------------------

def suite_bounds(quick=False, seed=0, jobs=1):
    """Schwarz symmetry, decay, positivity and the BMD / endpoint bounds."""
    rng = np.random.default_rng(seed)
    checks = []
    n_probe = 200 if quick else 1000
    sym = dec = 0.0
    min_im = np.inf
    for s, xi0 in sample_configs():
        sol = solve_kernel(s, xi0)
        z = interior_probes(s, n_probe, rng)
        psi = eval_psi(sol, z)
        sym = max(sym, np.abs(eval_psi(sol, z.conj()) - psi.conj()).max())
        min_im = min(min_im, psi.imag.min())
        far = 4.0 * max(s.diameter(), 1.0) * np.exp(1j * rng.uniform(0.05, np.pi - 0.05, 200)) * rng.uniform(1, 5, 200)
        dec = max(dec, (np.abs(eval_psi(sol, far)) * np.pi * np.abs(far) / 2.0).max())
    checks.append(_check("schwarz_symmetry", sym, 1e-12))
    checks.append(_check("decay_ratio", dec, 1.0))
    checks.append(_check("positivity_min_im_psi", min_im, 0.0, ok=min_im > 0))

    n = 20 if quick else 100
    for r in (0.25, 0.5, 1.0, 2.0):
        bmd = np.empty(n)
        ends = np.empty(n)
        for i in range(n):
            s = random_slits(rng, r)
            sol = solve_kernel(s, 0.0)
            bmd[i] = abs(bmd_from_solution(sol))
            left, right = psi_endpoints(sol)
            ends[i] = np.abs(np.concatenate([left, right])).max()
        checks.append(_check(f"bmd_bound_r={r}", bmd.max() * r, 4.0, violations=int(np.sum(bmd > 4.0 / r))))
        # the printed endpoint bound, and the one the Koebe argument actually gives
        checks.append(_check(f"endpoint_bound_r={r}", ends.max() * 4 * np.pi * r, 1.0,
                             violations=int(np.sum(ends > 1.0 / (4 * np.pi * r)))))
        checks.append(_check(f"endpoint_bound_koebe_r={r}", ends.max() * np.pi * r / 4.0, 1.0,
                             violations=int(np.sum(ends > 4.0 / (np.pi * r)))))
    return checks


def suite_oracle(quick=False, seed=0, jobs=1):
    """Im Psi against the lattice oracle, probes at least 3 cells from the slits."""
    h = 0.04 if quick else 0.02
    checks = []
    for k, (s, xi0) in enumerate(sample_configs()[:2]):
        t0 = time.perf_counter()
        lat = oracle_kernel_fd(s, xi0, LatticeConfig(h=h))
        sol = solve_kernel(lat.snapped, xi0)
        X, Y = np.meshgrid(lat.x, lat.y)
        Z = X + 1j * Y
        # the lattice cannot resolve the pole; compare away from xi0 and the box edge
        m = (Y >= 3 * h) & (lat.distance_to_slits(Z) >= 3 * h) & (np.abs(Z - xi0) >= 0.5) & (np.abs(Z) < 3)
        zz = Z[m]
        ref = eval_psi(sol, zz).imag
        rel = np.abs(lat.at(zz) - ref) / ref
        checks.append(_check(f"oracle_N={s.N}", rel.max(), 0.02, n_probes=int(zz.size),
                             seconds=time.perf_counter() - t0))
    return checks


def suite_explosion(quick=False, seed=0, jobs=1):
    """Deterministic explosion scenarios: lower bound on zeta and R at explosion."""
    checks = []
    scen = explosion_scenarios()
    if quick:
        scen = scen[:3]
    for name, s, drv in scen:
        tr = evolve_slits(s, drv, 20.0 * s.y0 ** 2, ODEConfig())
        if tr.status != "Exploded":
            checks.append(Check(f"{name}:exploded", False, float("nan"), float("nan"), {"status": tr.status}))
            continue
        rep = explosion_report(tr)
        lb = comparison_lower_bound(s.y0)
        checks.append(_check(f"{name}:zeta_lower_bound", tr.zeta / lb, 0.99, ok=tr.zeta >= 0.99 * lb,
                             zeta=tr.zeta, lower_bound=lb))
        checks.append(_check(f"{name}:final_R", rep["R_tail"][-1], 1e-3))
        tail = rep["R_tail"]
        checks.append(_check(f"{name}:tail_min_last", tail[-1] - tail.min(), 0.0))
    return checks


def suite_scaling(quick=False, seed=0, jobs=1, c=2.0):
    """Space-time scaling of a deterministic trajectory."""
    s = validate([1.0, 0.6], [-1.0, 0.4], [0.2, 1.3])
    drv = DeterministicDriver.expression("0.3*sin(2*t)")
    T = 0.3
    base = evolve_slits(s, drv, T)
    big = evolve_slits(scale(s, c), drv.scaled(c), c * c * T)
    times = np.linspace(0.0, T, 31)
    gap = np.abs(big.resample(c * c * times) - c * base.resample(times)).max()
    return [_check(f"scaling_c={c}", gap, 1e-6)]


def suite_capacity(quick=False, seed=0, jobs=1):
    # the slit sits beside the driver so the chain lives past t = 1
    s = single_slit(1.0, 1.0, -2.0)
    drv = DeterministicDriver.expression("0.3*sin(3*t)")
    hist = evolve_map(s, drv, [], 1.0)
    return [_check(f"hcap_t={t}", abs(hcap_estimate(hist, t) / (2 * t) - 1.0), 0.01) for t in (0.1, 0.5, 1.0)]


def consistency_points():
    ang = np.linspace(0.15, 0.85, 14) * np.pi
    return np.concatenate([2.6 * np.exp(1j * ang), [-2.4 + 0.4j, 2.4 + 0.4j, 0.2 + 1.8j, -0.4 + 2.2j, 3 + 1j,
                                                    -3 + 1.2j]])


TIGHT_CHAIN = ChainConfig(ode=ODEConfig(rtol=1e-11, atol=1e-13))


def consistency_gap(s, drv, t, points, cfg=None):
    """max |iota_t(g_t(z)) - g0_t(z)| over ``points``."""
    ch = evolve_map(s, drv, points, t, TIGHT_CHAIN)
    hist = evolve_iota(s, drv, t, ch.g[-1], cfg)
    hp = loewner_halfplane(hist.t, hist.U, hist.a0, points, t, hist.iota1)
    return float(np.abs(hist.values[-1] - hp.g).max()), hist


def ito_study(base_seed=1, n_paths=64, T=0.05, dts=(1e-3, 5e-4, 2.5e-4), slits=None, jobs=1):
    """Per-path rms gaps on nested grids, sharing the finest Brownian increments.

    Returns the per-path gaps and their geometric means per step size.
    """
    s = slits or single_slit()
    co = CoefficientSpec(Const(6 ** 0.5), BmdConstant(-1.0))
    fine_dt = dts[-1]
    n_fine = int(round(T / fine_dt))
    gaps = np.empty((n_paths, len(dts)))
    for i in range(n_paths):
        seed = (int(base_seed), i)
        fine = base_increments(seed, n_fine, fine_dt)
        for j, dt in enumerate(dts):
            f = int(round(dt / fine_dt))
            p = sample_path((0.0, s), co, T, dt, seed, increments=fine.reshape(-1, f).sum(axis=1))
            gaps[i, j] = ito_drive_check(p, evolve_iota(s, p, p.t[-1]))["rms_gap"]
    geo = np.exp(np.log(gaps).mean(axis=0))
    return {"gaps": gaps, "geo_mean": geo, "ratios": geo[:-1] / geo[1:], "dts": list(dts)}


def suite_transform(quick=False, seed=0, jobs=1):
    checks = []
    z = consistency_points()
    gap0, _ = consistency_gap(SlitVector.empty(), DeterministicDriver.expression("0.3*sin(3*t)"), 0.5, z)
    checks.append(_check("consistency_N=0", gap0, 1e-10))
    s = single_slit()
    drv = DeterministicDriver.expression("0.3*sin(3*t)")
    worst = 0.0
    for t in ((0.25,) if quick else (0.1, 0.25, 0.5)):
        g, hist = consistency_gap(s, drv, t, z)
        worst = max(worst, g)
        checks.append(_check(f"iota1_positive_t={t}", -hist.iota1.min(), 0.0, ok=hist.iota1.min() > 0))
        checks.append(_check(f"a0_increasing_t={t}", -np.diff(hist.a0).min(), 0.0, ok=np.all(np.diff(hist.a0) > 0)))
    checks.append(_check("consistency_N=1", worst, 1e-4))
    st = ito_study(n_paths=8 if quick else 64)
    for k, r in enumerate(st["ratios"]):
        checks.append(_check(f"ito_ratio_{k}", r, 1.3, ok=r >= 1.3, geo_mean=st["geo_mean"].tolist()))
    return checks


def suite_skle(quick=False, seed=0, jobs=1):
    """Explosion of SKLE(sqrt 6, -b_BMD) from a single slit at height 1."""
    co = CoefficientSpec(Const(6 ** 0.5), BmdConstant(-1.0))
    n = 10 if quick else 200
    res = mc_explosion((0.0, single_slit()), co, 10.0, n, base_seed=seed, dt=2e-2, cfg=SkleConfig(), jobs=jobs)
    lb = 2.0
    checks = [
        _check("skle_zeta_lower_bound", res["n_zeta_below_bound"], 0, min_zeta=res["min_zeta"],
               n_exploded=res["n_exploded"], lower_bound=lb),
        _check("skle_final_R", res["tail_R"].get("max", 0.0), 1e-3),
        _check("skle_failures", res["n_failed"], 0),
    ]
    return checks


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=float).encode()).hexdigest()


def path_bytes(tr) -> bytes:
    buf = io.StringIO()
    tr.write_csv(buf)
    return buf.getvalue().encode()


def suite_determinism(quick=False, seed=0, jobs=1):
    """Repeat seeded stochastic runs and compare bytes."""
    co = CoefficientSpec(Const(6 ** 0.5), BmdConstant(-1.0))
    s = single_slit()
    n = 3 if quick else 8
    a = [path_bytes(sample_path((0.0, s), co, 10.0, 2e-2, (seed, i))) for i in range(n)]
    b = [path_bytes(sample_path((0.0, s), co, 10.0, 2e-2, (seed, i))) for i in range(n)]
    same = sum(x == y for x, y in zip(a, b))
    m1 = mc_explosion((0.0, s), co, 2.0, n, base_seed=seed, dt=2e-2)
    m2 = mc_explosion((0.0, s), co, 2.0, n, base_seed=seed, dt=2e-2, jobs=jobs)
    return [_check("path_bytes_identical", n - same, 0),
            _check("mc_summary_identical", 0 if _digest(m1) == _digest(m2) else 1, 0)]


SUITES = {
    "bounds": suite_bounds,
    "oracle": suite_oracle,
    "explosion": suite_explosion,
    "scaling": suite_scaling,
    "capacity": suite_capacity,
    "transform": suite_transform,
    "skle": suite_skle,
    "determinism": suite_determinism,
}


def verify(suite: str, quick: bool = False, seed: int = 0, jobs: int = 1) -> dict:
    """Run a registered suite and return a JSON-ready report."""
    try:
        fn = SUITES[suite]
    except KeyError:
        raise UnknownSuite(f"unknown suite {suite!r}; known: {', '.join(sorted(SUITES))}") from None
    t0 = time.perf_counter()
    checks = fn(quick=quick, seed=seed, jobs=jobs)
    return {
        "suite": suite,
        "quick": quick,
        "passed": all(c.passed for c in checks),
        "n_failed": sum(not c.passed for c in checks),
        "seconds": time.perf_counter() - t0,
        "checks": [asdict(c) for c in checks],
    }
