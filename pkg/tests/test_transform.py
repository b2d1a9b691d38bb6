import numpy as np
import pytest

from kllab.drivers import DeterministicDriver
from kllab.errors import IncrementMismatch
from kllab.geometry import SlitVector, validate
from kllab.skle import BmdConstant, CoefficientSpec, Const, sample_path
from kllab.transform import (evolve_iota, hcap_halfplane, ito_drive_check, loewner_halfplane, time_change)
from kllab.verify import consistency_gap, consistency_points

SINE = DeterministicDriver.expression("0.3*sin(3*t)")


def test_identity_without_slits():
    z = np.array([1 + 1j, -0.5 + 2j])
    hist = evolve_iota(SlitVector.empty(), SINE, 0.2, z)
    assert np.allclose(hist.U, hist.xi, atol=1e-12)
    assert np.allclose(hist.iota1, 1.0, atol=1e-12)
    assert np.allclose(hist.iota2, 0.0, atol=1e-10)
    assert np.allclose(hist.a0, 2 * hist.t, atol=1e-12)
    assert np.abs(hist.values - z).max() < 1e-12


def test_halfplane_chain_closed_form():
    t = np.linspace(0, 0.5, 51)
    z = np.array([1 + 1j, -2 + 0.5j])
    hp = loewner_halfplane(t, np.zeros_like(t), 2 * t, z, 0.5)
    w = np.sqrt(z * z + 2.0)
    w = np.where(w.imag < 0, -w, w)
    assert np.abs(hp.g - w).max() < 1e-8
    assert hcap_halfplane(t, np.zeros_like(t), 2 * t, 0.5) == pytest.approx(1.0, rel=1e-6)


def test_halfplane_requires_increasing_capacity():
    t = np.linspace(0, 1, 5)
    with pytest.raises(ValueError):
        loewner_halfplane(t, np.zeros(5), np.zeros(5), [1j], 1.0)


def test_time_change_inverts_capacity():
    t = np.linspace(0, 1, 101)
    a0 = 2 * t + 0.5 * t ** 2
    s = time_change(t, a0, 0.3)
    assert np.interp(s, t, a0) == pytest.approx(0.6, abs=1e-12)


def test_single_slit_structure():
    s = validate([1.0], [-1.0], [1.0])
    hist = evolve_iota(s, SINE, 0.1)
    assert hist.iota1.min() > 0
    assert np.all(np.diff(hist.a0) > 0)
    assert np.abs(hist.U_imag).max() < 1e-8
    # the slit slows the capacity growth seen in H
    assert hist.iota1[-1] < 1.0


def test_short_consistency_gap():
    gap, _ = consistency_gap(validate([1.0], [-1.0], [1.0]), SINE, 0.05, consistency_points()[:6])
    assert gap < 1e-5


def test_empty_consistency_gap():
    gap, _ = consistency_gap(SlitVector.empty(), SINE, 0.2, consistency_points())
    assert gap < 1e-10


def test_ito_check_needs_the_path_grid():
    s = validate([1.0], [-1.0], [1.0])
    co = CoefficientSpec(Const(6 ** 0.5), BmdConstant(-1.0))
    p = sample_path((0.0, s), co, 0.02, 1e-3, seed=(1, 0))
    hist = evolve_iota(s, p, p.t[-1])
    chk = ito_drive_check(p, hist)
    assert chk["rms_gap"] < 1e-2 and chk["gap"][0] == 0.0
    other = sample_path((0.0, s), co, 0.02, 2e-3, seed=(1, 0))
    with pytest.raises(IncrementMismatch):
        ito_drive_check(other, hist)
