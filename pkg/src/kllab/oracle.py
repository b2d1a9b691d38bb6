"""Lattice oracle for the BMD Poisson kernel.

Five-point Laplacian on a truncated box above the real axis. The real axis
is held at zero except for the node nearest xi0, which carries 1/h (a unit
mass of boundary flux), the far boundary carries the half-plane Poisson
kernel, and all nodes of a slit are merged into one unknown whose net
discrete flux is zero. This is a direct discretisation of Brownian motion
with darning and shares no code with the panel solver.

A lattice slit whose end nodes are x0 and x1 behaves like the continuum
segment extended by TIP_EXTENSION * h beyond each end node. The constant was
measured on the exterior of a Dirichlet segment, where log|w + sqrt(w^2 - 1)|
is exact; the reported ``snapped`` geometry includes the extension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import LatticeTooCoarse
from .geometry import SlitVector

TIP_EXTENSION = 0.32


@dataclass(frozen=True)
class LatticeConfig:
    h: float = 0.02
    xmin: float = -8.0
    xmax: float = 8.0
    ymax: float = 8.0


@dataclass
class LatticeSolution:
    """Grid values of Im Psi; ``U[j, i]`` sits at ``x[i] + i y[j]``."""

    x: np.ndarray
    y: np.ndarray
    U: np.ndarray
    slit_values: np.ndarray
    slit_mask: np.ndarray
    xi_node: float
    h: float
    snapped: SlitVector

    def at(self, z):
        """Value at lattice nodes (z is rounded to the nearest node)."""
        z = np.asarray(z, dtype=complex)
        i = np.rint((z.real - self.x[0]) / self.h).astype(int)
        j = np.rint(z.imag / self.h).astype(int)
        return self.U[j, i]

    def distance_to_slits(self, z):
        z = np.asarray(z, dtype=complex)
        s = self.snapped
        if not s.N:
            return np.full(z.shape, np.inf)
        px = np.clip(z.real[..., None], s.x, s.xr)
        return np.hypot(z.real[..., None] - px, z.imag[..., None] - s.y).min(axis=-1)


def poisson_halfplane(z, xi0):
    """Closed-form Poisson kernel of the upper half-plane."""
    z = np.asarray(z, dtype=complex)
    return z.imag / (np.pi * np.abs(z - xi0) ** 2)


def oracle_kernel_fd(s: SlitVector, xi0: float, cfg: LatticeConfig | None = None) -> LatticeSolution:
    cfg = cfg or LatticeConfig()
    h = cfg.h
    nx = int(round((cfg.xmax - cfg.xmin) / h))
    ny = int(round(cfg.ymax / h))
    xs = cfg.xmin + h * np.arange(nx + 1)
    ys = h * np.arange(ny + 1)
    X, Y = np.meshgrid(xs, ys)

    # slit membership, after snapping to the lattice
    label = np.full(X.shape, -1, dtype=int)
    sy, sx, sxr = [], [], []
    for j, (yy, a, b) in enumerate(zip(s.y, s.x, s.xr)):
        row = int(round(yy / h))
        i0 = int(round((a - cfg.xmin) / h))
        i1 = int(round((b - cfg.xmin) / h))
        if row < 2 or i1 - i0 < 2 or row >= ny - 1 or i0 < 1 or i1 > nx - 1:
            raise LatticeTooCoarse(f"slit {j + 1} is not resolved by h={h} inside the box")
        if np.any(label[row, i0:i1 + 1] >= 0):
            raise LatticeTooCoarse(f"slit {j + 1} merges with another slit at h={h}")
        label[row, i0:i1 + 1] = j
        sy.append(row * h)
        sx.append(xs[i0] - TIP_EXTENSION * h)
        sxr.append(xs[i1] + TIP_EXTENSION * h)

    # Dirichlet data
    fixed = np.zeros(X.shape, dtype=bool)
    val = np.zeros(X.shape)
    fixed[0, :] = fixed[-1, :] = fixed[:, 0] = fixed[:, -1] = True
    edge = fixed.copy()
    edge[0, :] = False
    val[edge] = poisson_halfplane(X[edge] + 1j * Y[edge], xi0)
    isrc = int(round((xi0 - cfg.xmin) / h))
    if not 0 < isrc < nx:
        raise LatticeTooCoarse("xi0 lies outside the lattice box")
    val[0, isrc] = 1.0 / h

    free = ~fixed & (label < 0)
    idx = np.full(X.shape, -1, dtype=int)
    nfree = int(free.sum())
    idx[free] = np.arange(nfree)
    N = s.N
    n = nfree + N

    rows, cols, data = [], [], []
    rhs = np.zeros(n)
    fj, fi = np.nonzero(free)
    p = idx[fj, fi]
    rows.append(p)
    cols.append(p)
    data.append(np.full(p.size, 4.0))
    for dj, di in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        qj, qi = fj + dj, fi + di
        lab = label[qj, qi]
        fr = free[qj, qi]
        rows.append(p[fr])
        cols.append(idx[qj[fr], qi[fr]])
        data.append(np.full(fr.sum(), -1.0))
        sl = lab >= 0
        rows.append(p[sl])
        cols.append(nfree + lab[sl])
        data.append(np.full(sl.sum(), -1.0))
        fx = fixed[qj, qi]
        np.add.at(rhs, p[fx], val[qj[fx], qi[fx]])
    # zero net flux out of each merged slit node
    for j in range(N):
        mj, mi = np.nonzero(label == j)
        deg = 0
        for dj, di in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            qj, qi = mj + dj, mi + di
            out = label[qj, qi] != j
            deg += int(out.sum())
            fr = out & free[qj, qi]
            rows.append(np.full(fr.sum(), nfree + j))
            cols.append(idx[qj[fr], qi[fr]])
            data.append(np.full(fr.sum(), -1.0))
            other = out & (label[qj, qi] >= 0)
            rows.append(np.full(other.sum(), nfree + j))
            cols.append(nfree + label[qj[other], qi[other]])
            data.append(np.full(other.sum(), -1.0))
            fx = out & fixed[qj, qi]
            rhs[nfree + j] += val[qj[fx], qi[fx]].sum()
        rows.append(np.array([nfree + j]))
        cols.append(np.array([nfree + j]))
        data.append(np.array([float(deg)]))
    A = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    sol = spla.spsolve(A.tocsc(), rhs)

    U = val.copy()
    U[free] = sol[:nfree]
    for j in range(N):
        U[label == j] = sol[nfree + j]
    U[0, isrc] = 0.0  # the source node is a boundary atom, not a field value
    snapped = SlitVector(np.array(sy), np.array(sx), np.array(sxr))
    return LatticeSolution(xs, ys, U, sol[nfree:].copy(), label >= 0, xs[isrc], h, snapped)


def oracle_drift(s: SlitVector, xi0: float, cfg: LatticeConfig | None = None) -> np.ndarray:
    """Slit velocities from the lattice oracle.

    Heights use the merged-node value. Re Psi at an endpoint is recovered
    from Cauchy-Riemann, integrating d(Re Psi)/dy = -d(Im Psi)/dx down the
    endpoint's column from the top of the box, where Psi is close to its pole
    term. The integrand has an inverse square-root singularity at the tip, so
    the endpoint components are only first-order accurate (a few percent at
    the default spacing).
    """
    lat = oracle_kernel_fd(s, xi0, cfg)
    h = lat.h
    U = lat.U
    top = len(lat.y) - 1
    out = np.empty(3 * s.N)
    out[:s.N] = -2.0 * np.pi * lat.slit_values
    for j in range(s.N):
        row = int(round(lat.snapped.y[j] / h))
        for col_x, slot in ((lat.snapped.x[j], s.N + j), (lat.snapped.xr[j], 2 * s.N + j)):
            i = int(round((col_x - lat.x[0]) / h))  # end node of the slit
            dudx = (U[row:top, i + 1] - U[row:top, i - 1]) / (2 * h)
            ztop = lat.x[i] + 1j * lat.y[top - 1]
            re_top = (-1.0 / (np.pi * (ztop - xi0))).real
            # trapezoid from the endpoint row up to the row below the top edge
            integral = h * (dudx.sum() - 0.5 * (dudx[0] + dudx[-1]))
            out[slot] = -2.0 * np.pi * (re_top + integral)
    return out
