import io

import numpy as np
import pytest

from kllab.geometry import SlitVector, validate
from kllab.skle import (BmdConstant, CoefficientSpec, Const, SkleConfig, Zero, base_increments, mc_explosion,
                        parse_coefficient, probe_condition_B, sample_path, wilson_interval)

SKLE = CoefficientSpec(Const(6 ** 0.5), BmdConstant(-1.0))


def _csv(tr):
    buf = io.StringIO()
    tr.write_csv(buf)
    return buf.getvalue()


def test_empty_domain_is_scaled_brownian_motion():
    tr = sample_path((0.5, SlitVector.empty()), CoefficientSpec(Const(2.0), Zero()), 1.0, 0.1, seed=7)
    dB = base_increments(7, 10, 0.1)
    assert np.allclose(tr.xi, 0.5 + 2.0 * np.concatenate([[0.0], np.cumsum(dB)]), atol=1e-14)
    assert tr.status == "Completed" and tr.t[-1] == pytest.approx(1.0)


def test_same_seed_same_bytes(one_slit):
    a = sample_path((0.0, one_slit), SKLE, 0.3, 2e-2, seed=(3, 1))
    b = sample_path((0.0, one_slit), SKLE, 0.3, 2e-2, seed=(3, 1))
    assert _csv(a) == _csv(b)
    c = sample_path((0.0, one_slit), SKLE, 0.3, 2e-2, seed=(3, 2))
    assert _csv(a) != _csv(c)


def test_substeps_refine_base_increments(one_slit):
    dt = 5e-2
    tr = sample_path((0.0, one_slit), SKLE, 0.5, dt, seed=(0, 4))
    assert np.allclose(np.diff(tr.t), tr.h)
    # substeps of base step k sum to its increment (only complete steps)
    k = np.floor(tr.t[:-1] / dt + 1e-9).astype(int)
    sums = np.bincount(k, weights=tr.dB)
    done = int(np.floor(tr.t[-1] / dt + 1e-9))
    assert done > 0
    assert np.allclose(sums[:done], base_increments((0, 4), 10, dt)[:done], atol=1e-12)


def test_drift_follows_bmd_constant(one_slit):
    tr = sample_path((0.3, one_slit), SKLE, 0.1, 2e-2, seed=1)
    assert np.allclose(tr.xi[1:] - tr.xi[:-1], tr.alpha * tr.dB + tr.b * tr.h, atol=1e-14)


def test_explosion_ends_close_to_slit():
    s = validate([0.3], [-0.3], [0.3])
    tr = sample_path((0.0, s), SKLE, 2.0, 1e-2, seed=(0, 0))
    assert tr.status == "Exploded"
    assert tr.R[-1] <= SkleConfig().eps_explode


def test_mc_summary_independent_of_jobs(one_slit):
    a = mc_explosion((0.0, one_slit), SKLE, 0.2, 3, base_seed=2, dt=2e-2)
    b = mc_explosion((0.0, one_slit), SKLE, 0.2, 3, base_seed=2, dt=2e-2, jobs=2)
    assert a == b
    assert a["n_paths"] == 3 and 0 <= a["p_hat"] <= 1


def test_wilson_interval():
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-4) and hi == pytest.approx(0.5962, abs=1e-4)
    assert wilson_interval(0, 10)[0] == 0.0
    assert wilson_interval(0, 0) == (0.0, 1.0)


def test_parse_coefficient():
    assert parse_coefficient("const:2", "alpha").value == 2.0
    assert isinstance(parse_coefficient("zero", "b"), Zero)
    assert parse_coefficient("bmd:-1", "b").lam == -1.0
    for text, kind in (("bmd:1", "alpha"), ("const:1", "b"), ("what", "b")):
        with pytest.raises(ValueError):
            parse_coefficient(text, kind)
    with pytest.raises(ValueError):
        Const(-1.0)


def test_homogeneity_declared():
    rep = SKLE.check(n_probe=3)
    assert rep["ok"], rep


def test_condition_B_probe_for_bmd_constant():
    rep = probe_condition_B(BmdConstant(1.0), 0.5, n_samples=16)
    assert rep["sup"] <= 4.0 / 0.5
    assert rep["heuristic"] and len(rep["sups_by_doubling"]) == 5


def test_small_low_slit_follows_boundary_point():
    # a slit much smaller than its distance to a fixed xi moves like the point 1 under g_t = sqrt(z^2 + 4t)
    s = validate([2e-6], [1.0 - 5e-6], [1.0 + 5e-6])
    tr = sample_path((0.0, s), CoefficientSpec(Const(0.0), Zero()), 1.0, 0.05, seed=0)
    assert tr.status == "Completed"
    assert [j for j, _ in tr.point_slits] == [0]
    y, x, xr = tr.states[-1]
    c = np.sqrt(5.0)
    assert 0.5 * (x + xr) == pytest.approx(c, abs=1e-5)
    assert y == pytest.approx(2e-6 / c, rel=1e-4)
    assert xr - x == pytest.approx(1e-5 / c, rel=1e-4)
