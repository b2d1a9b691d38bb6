"""Acceptance criteria, one test each, at full size.

Criteria 3 (printed endpoint bound), 4 and 10 (lower bound on the explosion
time) check claims that the computations contradict; see the README.
"""

import time

import numpy as np
import pytest

from kllab.drivers import DeterministicDriver
from kllab.geometry import SlitVector
from kllab.kernel import eval_psi, solve_kernel
from kllab import verify as V

pytestmark = pytest.mark.slow


def _failed(checks):
    return [(c.name, c.observed, c.bound, c.detail) for c in checks if not c.passed]


def _timed(fn, **kw):
    t0 = time.perf_counter()
    out = fn(**kw)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def explosion_run():
    return _timed(V.suite_explosion)


def test_c01_kernel_exact_without_slits():
    rng = np.random.default_rng(1)
    z = rng.uniform(-5, 5, 1000) + 1j * rng.uniform(1e-3, 5, 1000)
    t0 = time.perf_counter()
    sol = solve_kernel(SlitVector.empty(), 0.37)
    err = np.abs(eval_psi(sol, z) + 1 / (np.pi * (z - 0.37))).max()
    elapsed = time.perf_counter() - t0
    assert err <= 1e-12
    assert elapsed < 1.0


def test_c02_kernel_matches_darning_oracle():
    checks = V.suite_oracle()
    assert {c.name for c in checks} == {"oracle_N=1", "oracle_N=2"}
    assert not _failed(checks)
    assert all(c.detail["seconds"] < 60 for c in checks)
    assert all(c.detail["n_probes"] > 100 for c in checks)


def test_c03_bmd_and_endpoint_bounds():
    checks, elapsed = _timed(V.suite_bounds)
    stated = [c for c in checks if c.name.startswith(("bmd_bound_r=", "endpoint_bound_r="))]
    assert len(stated) == 8
    assert elapsed < 120
    assert sum(c.detail["violations"] for c in stated) == 0, _failed(stated)


def test_c04_explosion_time_lower_bound(explosion_run):
    checks, elapsed = explosion_run
    zeta = [c for c in checks if c.name.endswith(":zeta_lower_bound")]
    assert len(zeta) >= 10
    heights = sorted(float(c.name.split(":")[0][3:]) for c in zeta)
    assert heights[0] == pytest.approx(0.3) and heights[-1] == pytest.approx(2.0)
    assert elapsed < 300
    assert not _failed(zeta)


def test_c05_R_vanishes_at_explosion(explosion_run):
    checks, _ = explosion_run
    assert not [c for c in checks if c.name.endswith(":exploded")]
    final = [c for c in checks if c.name.endswith((":final_R", ":tail_min_last"))]
    assert len(final) >= 20
    assert not _failed(final)


def test_c06_scaling_equivariance():
    checks = V.suite_scaling(c=2.0)
    assert not _failed(checks)


def test_c07_capacity_is_2t():
    checks = V.suite_capacity()
    assert len(checks) == 3
    assert not _failed(checks)


def test_c08_transform_consistency():
    z = V.consistency_points()
    assert z.size == 20
    drv = DeterministicDriver.expression("0.3*sin(3*t)")
    gap0, _ = V.consistency_gap(SlitVector.empty(), drv, 0.5, z)
    assert gap0 <= 1e-10
    s = V.single_slit()
    gaps = [V.consistency_gap(s, drv, t, z)[0] for t in (0.1, 0.25, 0.5)]
    assert max(gaps) <= 1e-4


def test_c09_ito_drive_sqrt_dt_trend():
    st = V.ito_study(base_seed=1)
    assert st["dts"] == [1e-3, 5e-4, 2.5e-4]
    assert np.all(np.diff(st["geo_mean"]) < 0)
    assert np.all(st["ratios"] >= 1.3), st["ratios"]


def test_c10_skle_explosion():
    checks, elapsed = _timed(V.suite_skle)
    by = {c.name: c for c in checks}
    assert elapsed < 15 * 60
    assert by["skle_failures"].passed, by["skle_failures"].detail
    assert by["skle_final_R"].passed, by["skle_final_R"]
    assert by["skle_zeta_lower_bound"].passed, by["skle_zeta_lower_bound"]


def test_c11_determinism():
    checks = V.suite_determinism()
    assert not _failed(checks)
    st = [V.ito_study(base_seed=3, n_paths=2, T=0.01)["gaps"] for _ in range(2)]
    assert np.array_equal(st[0], st[1])
