import numpy as np
import pytest

from kllab.chain import evolve_map, flow_points, hcap_estimate, hull_at, trace_tip
from kllab.drivers import DeterministicDriver
from kllab.errors import ProbeTooClose
from kllab.geometry import SlitVector, validate

ZERO = DeterministicDriver.constant(0.0)


def test_empty_domain_matches_closed_form():
    z = np.array([1.0 + 1.0j, -2.0 + 0.5j, 0.3 + 2.0j])
    t = 0.4
    hist = evolve_map(SlitVector.empty(), ZERO, z, t)
    w = np.sqrt(z * z + 4 * t)
    w = np.where(w.imag < 0, -w, w)
    assert np.abs(hist.g[-1] - w).max() < 1e-6


def test_swallow_time_on_imaginary_axis():
    hist = evolve_map(SlitVector.empty(), ZERO, [1.0j, 3.0j], 0.5)
    assert hist.swallowed_at[0] == pytest.approx(0.25, abs=1e-3)
    assert np.isnan(hist.swallowed_at[1])
    assert hull_at(hist, 0.5).tolist() == [1.0j]
    assert hull_at(hist, 0.2).size == 0


def test_tip_of_vertical_slit():
    tip = trace_tip(SlitVector.empty(), ZERO, 0.25, delta=1e-4)
    assert abs(tip - 1.0j) < 1e-2


def test_capacity_without_slits():
    hist = evolve_map(SlitVector.empty(), DeterministicDriver.expression("0.5*sin(t)"), [], 1.0)
    assert hcap_estimate(hist, 1.0) == pytest.approx(2.0, rel=1e-3)


def test_capacity_with_slit():
    s = validate([1.0], [-3.0], [-1.0])
    hist = evolve_map(s, DeterministicDriver.expression("0.3*sin(3*t)"), [], 0.3)
    assert hcap_estimate(hist, 0.3) == pytest.approx(0.6, rel=1e-2)


def test_flow_points_reuses_path(one_slit):
    drv = DeterministicDriver.expression("0.3*sin(3*t)")
    z = np.array([2.0 + 2.0j, -1.5 + 0.4j])
    hist = evolve_map(validate([1.0], [-3.0], [-1.0]), drv, z, 0.2)
    again = flow_points(hist, z, 0.2)
    assert np.abs(again - hist.g[-1]).max() < 1e-6


def test_images_stay_in_upper_half_plane(one_slit):
    z = np.array([0.5 + 2.0j, 2.0 + 0.2j, -2.5 + 1.5j])
    hist = evolve_map(one_slit, DeterministicDriver.constant(0.0), z, 0.15)
    assert np.all(hist.g.imag > 0)
    assert hist.N == 1 and np.all(np.diff(hist.states[:, 0]) < 0)


def test_points_on_slits_rejected(one_slit):
    with pytest.raises(ValueError):
        evolve_map(one_slit, ZERO, [0.0 + 1.0j], 0.1)


def test_capacity_probe_radius_checked():
    hist = evolve_map(validate([1.0], [-3.0], [-1.0]), ZERO, [], 0.1)
    assert hcap_estimate(hist, 0.0) == 0.0
    with pytest.raises(ProbeTooClose):
        hcap_estimate(hist, 0.1, rho=1.0)


def test_hull_reach_empty_domain():
    x, y = np.meshgrid(np.linspace(-2.5, 2.5, 11), np.linspace(0.25, 2.5, 10))
    z = (x + 1j * y).ravel()
    hist = evolve_map(SlitVector.empty(), ZERO, z, 1.0)
    hull = hull_at(hist, 1.0)
    assert hull.size and np.abs(hull).max() <= 2.0 + 1e-9
    early = hull_at(hist, 0.3)
    assert set(early.tolist()) <= set(hull.tolist())
