import io

import numpy as np
import pytest

from kllab.drivers import DeterministicDriver, from_dict
from kllab.errors import NotExploded
from kllab.geometry import scale, translate, validate
from kllab.slit_ode import ODEConfig, comparison_lower_bound, evolve_slits, explosion_report

SINE = DeterministicDriver.expression("0.3*sin(2*t)")


def test_heights_decrease(two_slits):
    tr = evolve_slits(two_slits, SINE, 0.2)
    assert tr.status == "Completed"
    assert np.all(np.diff(tr.states[:, :2], axis=0) < 0)


def test_translation_equivariance(two_slits):
    a = 0.9
    base = evolve_slits(two_slits, SINE, 0.2)
    moved = evolve_slits(translate(two_slits, a), SINE.shifted(a), 0.2)
    shift = np.concatenate([np.zeros(2), np.full(4, a)])
    assert np.abs(moved.states[-1] - base.states[-1] - shift).max() < 1e-7


def test_scaling_equivariance(two_slits):
    c = 2.0
    base = evolve_slits(two_slits, SINE, 0.1)
    big = evolve_slits(scale(two_slits, c), SINE.scaled(c), c * c * 0.1)
    t = np.linspace(0, 0.1, 11)
    assert np.abs(big.resample(c * c * t) - c * base.resample(t)).max() < 1e-6


def test_reflection_symmetry():
    s = validate([1.0], [-1.0], [1.0])
    tr = evolve_slits(s, DeterministicDriver.constant(0.0), 0.2)
    y, x, xr = tr.states[-1]
    assert x == pytest.approx(-xr, abs=1e-10)


def test_centred_slit_explodes_with_small_R():
    s = validate([0.5], [-0.5], [0.5])
    tr = evolve_slits(s, DeterministicDriver.constant(0.0), 20 * 0.25)
    assert tr.status == "Exploded"
    rep = explosion_report(tr)
    assert rep["R_tail"][-1] <= 1e-3
    assert rep["R_tail"][-1] == rep["R_tail"].min()


def test_far_slit_survives():
    s = validate([1.0], [5.0], [6.0])
    tr = evolve_slits(s, DeterministicDriver.constant(0.0), 0.5)
    assert tr.status == "Completed"
    with pytest.raises(NotExploded):
        explosion_report(tr)


def test_comparison_bound():
    assert comparison_lower_bound(0.5) == 0.5
    with pytest.raises(ValueError):
        comparison_lower_bound(0.0)


def test_csv_round_trip(two_slits):
    tr = evolve_slits(two_slits, SINE, 0.05)
    buf = io.StringIO()
    tr.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,y_1,y_2,x_1,x_2,xr_1,xr_2,xi,R"
    back = np.loadtxt(io.StringIO(buf.getvalue()), delimiter=",", skiprows=1)
    assert np.array_equal(back[:, 1:7], tr.states)
    assert np.array_equal(back[:, 0], tr.t)


def test_driver_serial_forms():
    assert from_dict({"type": "expr", "expr": "0.3*sin(2*t)"})(0.5) == pytest.approx(0.3 * np.sin(1.0))
    tab = from_dict({"type": "table", "t": [0, 1], "xi": [0, 2]})
    assert tab(0.25) == pytest.approx(0.5)
    assert from_dict(1.5)(3.0) == 1.5
    assert SINE.to_dict() == {"type": "expr", "expr": "0.3*sin(2*t)"}
    with pytest.raises(ValueError):
        from_dict({"type": "spline"})


def test_tight_tolerance_changes_little(two_slits):
    a = evolve_slits(two_slits, SINE, 0.1)
    b = evolve_slits(two_slits, SINE, 0.1, ODEConfig(rtol=1e-11, atol=1e-13))
    assert np.abs(a.states[-1] - b.states[-1]).max() < 1e-6
