import numpy as np
import pytest

from kllab import _panels_py, backend
from kllab.errors import EvalOnSingularity
from kllab.geometry import SlitVector, scale, translate, validate
from kllab.kernel import (KernelConfig, bmd_constant, drift_b, eval_h, eval_psi, psi_endpoints, solve_kernel)

NOCACHE = KernelConfig(cache=False)


def test_empty_configuration_is_exact(rng):
    z = rng.uniform(-3, 3, 200) + 1j * rng.uniform(0.01, 3, 200)
    sol = solve_kernel(SlitVector.empty(), 0.4)
    assert np.abs(eval_psi(sol, z) + 1 / (np.pi * (z - 0.4))).max() == 0.0
    assert bmd_constant(SlitVector.empty(), 0.4) == 0.0


def test_residual_below_tolerance(two_slits):
    sol = solve_kernel(two_slits, 0.2, NOCACHE)
    assert sol.residual < NOCACHE.tol


def test_slit_charges_vanish(two_slits):
    sol = solve_kernel(two_slits, 0.2, NOCACHE)
    assert np.abs(sol.slit_charge()).max() < 1e-12


def test_im_psi_constant_along_slit(one_slit):
    sol = solve_kernel(one_slit, 0.3)
    x = np.linspace(-0.9, 0.9, 7)
    for dy in (1e-4, -1e-4):
        vals = eval_psi(sol, x + 1j * (1.0 + dy)).imag
        assert np.ptp(vals) < 1e-3
        assert np.abs(vals - sol.c[0]).max() < 1e-3
    left, right = psi_endpoints(sol)
    assert left[0].imag == right[0].imag == sol.c[0]


def test_zero_on_real_axis(two_slits):
    sol = solve_kernel(two_slits, 0.2)
    x = np.array([-5.0, -1.0, 0.0, 0.7, 3.0])
    assert np.abs(eval_psi(sol, x).imag).max() < 1e-12


def test_schwarz_reflection(two_slits, rng):
    sol = solve_kernel(two_slits, 0.2)
    z = rng.uniform(-3, 3, 100) + 1j * rng.uniform(1.6, 3, 100)
    assert np.abs(eval_psi(sol, z.conj()) - eval_psi(sol, z).conj()).max() < 1e-13


def test_positive_in_domain(two_slits, rng):
    sol = solve_kernel(two_slits, 0.2)
    z = rng.uniform(-3, 3, 500) + 1j * rng.uniform(1.6, 4, 500)
    assert eval_psi(sol, z).imag.min() > 0


def test_translation_and_scaling(two_slits):
    xi, c, a = 0.2, 2.5, -0.8
    b = bmd_constant(two_slits, xi)
    assert bmd_constant(translate(two_slits, a), xi + a) == pytest.approx(b, rel=1e-9)
    assert bmd_constant(scale(two_slits, c), c * xi) == pytest.approx(b / c, rel=1e-9)
    v = drift_b(two_slits, xi)
    assert np.allclose(drift_b(scale(two_slits, c), c * xi), v / c, rtol=1e-8, atol=1e-12)


def test_centred_slit_has_no_bmd_drift():
    s = validate([1.0], [-1.0], [1.0])
    assert abs(bmd_constant(s, 0.0, NOCACHE)) < 1e-10
    # off centre the sign follows the mirror symmetry x -> -x
    assert bmd_constant(s, 0.4) == pytest.approx(-bmd_constant(s, -0.4), rel=1e-9)


def test_regular_part_finite_at_pole(one_slit):
    sol = solve_kernel(one_slit, 0.3)
    near = eval_h(sol, 0.3 + 1e-7j)
    assert abs(eval_h(sol, 0.3, check=False) - near) < 1e-6


def test_singular_evaluation_rejected(one_slit):
    sol = solve_kernel(one_slit, 0.3)
    with pytest.raises(EvalOnSingularity):
        eval_psi(sol, 0.3 + 0j)
    with pytest.raises(EvalOnSingularity):
        eval_psi(sol, 0.2 + 1.0j)


def test_cache_returns_same_solution(two_slits):
    a = solve_kernel(two_slits, 0.123)
    b = solve_kernel(validate(two_slits.vector.copy()), 0.123)
    assert a is b
    c = solve_kernel(two_slits, 0.123, NOCACHE)
    assert np.array_equal(a.q, c.q)


@pytest.mark.skipif(backend.NAME != "cython", reason="compiled extension not built")
def test_compiled_and_numpy_backends_agree(two_slits, rng):
    from kllab import _panels
    sol = solve_kernel(two_slits, 0.2)
    nodes = sol.charge_points
    a = _panels_py.potential_matrix(sol.kind, sol.lo, sol.hi, sol.yl, nodes)
    b = _panels.potential_matrix(sol.kind, sol.lo, sol.hi, sol.yl, nodes)
    assert np.abs(a - b).max() < 1e-12
    z = rng.uniform(-3, 3, 300) + 1j * rng.uniform(0.05, 3, 300)
    direct = np.ones(sol.kind.size, dtype=np.int8)
    fa = _panels_py.charge_field(sol.kind, sol.lo, sol.hi, sol.yl, sol.q, z, direct)
    fb = _panels.charge_field(sol.kind, sol.lo, sol.hi, sol.yl, sol.q, z, direct)
    assert np.abs(fa - fb).max() < 1e-12
