import numpy as np
import pytest

from kllab.errors import StepUnderflow
from kllab.ode import RejectStep, dopri45


def test_exponential_decay():
    sol = dopri45(lambda t, y: -y, 0.0, np.array([1.0, 2.0]), 3.0, rtol=1e-10, atol=1e-12)
    assert sol.status == "completed"
    assert np.allclose(sol.y[-1], np.exp(-3.0) * np.array([1.0, 2.0]), rtol=1e-8)
    assert sol.t[-1] == 3.0


def test_complex_rotation_and_dense_output():
    sol = dopri45(lambda t, y: 1j * y, 0.0, np.array([1.0 + 0j]), 2.0, rtol=1e-10, atol=1e-12)
    tq = np.linspace(0.0, 2.0, 41)
    assert np.abs(sol(tq)[:, 0] - np.exp(1j * tq)).max() < 1e-6


def test_stop_event():
    sol = dopri45(lambda t, y: np.ones(1), 0.0, np.zeros(1), 10.0, stop=lambda t, y: "big" if y[0] > 2 else "")
    assert sol.status == "stopped" and sol.info["stop"] == "big"
    assert 2.0 < sol.y[-1, 0] < 10.0


def test_step_cap_respected():
    sol = dopri45(lambda t, y: -y, 0.0, np.ones(1), 1.0, step_cap=lambda t, y: 0.01)
    assert np.diff(sol.t).max() <= 0.01 + 1e-15


def test_rejected_region_shrinks_step():
    def f(t, y):
        if y[0] < 0:
            raise RejectStep()
        return -np.ones(1)

    with pytest.raises(StepUnderflow):
        dopri45(f, 0.0, np.ones(1), 2.0, h_min=1e-9)
