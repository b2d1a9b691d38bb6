import numpy as np
import pytest

from kllab.errors import LatticeTooCoarse
from kllab.geometry import SlitVector, validate
from kllab.kernel import eval_psi, solve_kernel
from kllab.oracle import LatticeConfig, oracle_kernel_fd, poisson_halfplane

COARSE = LatticeConfig(h=0.08)


def _probes(lat, xi0, cells=3):
    X, Y = np.meshgrid(lat.x, lat.y)
    Z = X + 1j * Y
    m = (Y >= cells * lat.h) & (lat.distance_to_slits(Z) >= cells * lat.h) & (np.abs(Z - xi0) >= 0.5) & (np.abs(Z) < 3)
    return Z[m]


def test_poisson_halfplane_matches_closed_kernel(rng):
    z = rng.uniform(-2, 2, 50) + 1j * rng.uniform(0.1, 2, 50)
    sol = solve_kernel(SlitVector.empty(), 0.1)
    assert np.allclose(poisson_halfplane(z, 0.1), eval_psi(sol, z).imag, rtol=1e-14)


def test_empty_lattice_near_closed_form():
    lat = oracle_kernel_fd(SlitVector.empty(), 0.0, COARSE)
    z = _probes(lat, 0.0)
    rel = np.abs(lat.at(z) - poisson_halfplane(z, 0.0)) / poisson_halfplane(z, 0.0)
    assert rel.max() < 0.05


def test_single_slit_coarse_agreement(one_slit):
    lat = oracle_kernel_fd(one_slit, 0.0, COARSE)
    z = _probes(lat, 0.0)
    ref = eval_psi(solve_kernel(lat.snapped, 0.0), z).imag
    assert (np.abs(lat.at(z) - ref) / ref).max() < 0.05


def test_slit_is_a_single_node(one_slit):
    lat = oracle_kernel_fd(one_slit, 0.0, COARSE)
    vals = lat.U[lat.slit_mask]
    assert np.ptp(vals) == 0.0
    assert vals[0] == pytest.approx(lat.slit_values[0])


def test_unresolvable_slit_rejected():
    with pytest.raises(LatticeTooCoarse):
        oracle_kernel_fd(validate([0.05], [0.0], [0.01]), 0.5, COARSE)
