"""Complex Poisson kernel of Brownian motion with darning on a slit domain.

Psi(z) = -1/(pi (z - xi0)) + H(z), where the regular part H is the complex
log potential of a charge density on each slit minus its mirror image:

    H(z) = i * sum_j int q_j(w) [Log(z - w) - Log(z - conj w)] |dw|.

The densities are fixed by three conditions: Im Psi is constant (= c_j) on
slit j, each slit carries zero net charge (zero flux), and Im Psi vanishes on
the real axis (automatic from the images). Zero net charge also makes the
horizontal branch cuts of the logs cancel away from the slits, so Re Psi is
continuous in D(s).

Each slit is discretised by K Gauss panels of P nodes. Tip panels use a
quadratic parametrisation that absorbs the inverse square-root tip singularity,
and panel breakpoints are graded towards the tips and towards xi0.
"""

from __future__ import annotations

import hashlib
import logging
import os
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import backend
from ._quad import INTERIOR, LEFT, NODES, RIGHT, WEIGHTS, P, panel_nodes
from .errors import EvalOnSingularity, IllConditioned, PointTooClose
from .geometry import EPS_GEOM, SlitVector, distance_R, slit_distance

log = logging.getLogger(__name__)

PANEL_LADDER = (4, 8, 12, 16, 24, 32)

# parameter positions of residual probes: between the first, middle and last node pairs
_PROBE_S = np.array([0.5 * (NODES[0] + NODES[1]), 0.5 * (NODES[P // 2 - 1] + NODES[P // 2]),
                     0.5 * (NODES[-2] + NODES[-1])])


@dataclass(frozen=True)
class KernelConfig:
    """Discretisation and tolerance settings.

    ``M`` and ``M_max`` are node counts per slit (multiples of 12). The
    starting size is raised above ``M`` when the grading range of a slit
    predicts that ``M`` cannot meet ``tol``; refinement then moves offending
    slits up the panel ladder until the residual is below ``tol``.
    """

    M: int = 48
    M_max: int = 384
    tol: float = 1e-8
    fail_tol: float = 1e-5
    kappa: float = 1.0
    dv_max: float = 1.07
    cache: bool = True

    def key(self):
        return (self.M, self.M_max, self.tol, self.fail_tol, self.kappa, self.dv_max)


DEFAULT_CONFIG = KernelConfig()


@dataclass(frozen=True, eq=False)
class KernelSolution:
    """Discrete representation of Psi_s(., xi0).

    ``q`` holds charge densities per unit panel parameter at the Gauss
    nodes; ``c`` the slit constants (Im Psi on each slit); ``residual``
    the largest collocation defect, in units of 1/(pi R).
    """

    s: SlitVector
    xi0: float
    kind: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    yl: np.ndarray
    owner: np.ndarray
    q: np.ndarray
    c: np.ndarray
    residual: float
    M: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def charge_points(self) -> np.ndarray:
        pts = [panel_nodes(k, a, b)[0] + 1j * y for k, a, b, y in zip(self.kind, self.lo, self.hi, self.yl)]
        return np.concatenate(pts) if pts else np.empty(0, dtype=complex)

    @property
    def charges(self) -> np.ndarray:
        """Point charges: nodal density times its quadrature weight."""
        return self.q * np.tile(WEIGHTS, self.kind.size)

    def slit_charge(self) -> np.ndarray:
        """Net charge of each slit (zero up to rounding)."""
        return np.bincount(np.repeat(self.owner, P), weights=self.charges, minlength=self.s.N)


def _grading(a, b, y, xi0, kappa):
    L = b - a
    et = min(2.0 * y, L)
    f = min(max(xi0, a), b)
    ef = min(max(np.hypot(xi0 - f, y), 1e-300), L)
    return L, et, f, ef


def grading_range(a, b, y, xi0, kappa=1.0) -> float:
    """Total extent of the grading coordinate over the slit [a, b] + iy."""
    L, et, f, ef = _grading(a, b, y, xi0, kappa)

    def v(x):
        return kappa * (x - a) / L + np.arcsinh((x - a) / et) + np.arcsinh((x - b) / et) + np.arcsinh((x - f) / ef)

    return float(v(b) - v(a))


def _panels_for(a, b, y, xi0, K, kappa):
    L, et, f, ef = _grading(a, b, y, xi0, kappa)
    e = backend.grade_breakpoints(a, b, et, f, ef, kappa, K)
    kind = np.full(K, INTERIOR, dtype=np.int8)
    kind[0], kind[-1] = LEFT, RIGHT
    return kind, e[:-1].copy(), e[1:].copy()


def _start_K(s, xi0, cfg):
    kmin = max(cfg.M // P, 2)
    kmax = max(cfg.M_max // P, kmin)
    out = []
    for y, a, b in zip(s.y, s.x, s.xr):
        need = grading_range(a, b, y, xi0, cfg.kappa) / cfg.dv_max
        K = next((k for k in PANEL_LADDER if k >= max(kmin, need)), kmax)
        out.append(min(max(K, kmin), kmax))
    return out


def _next_K(K, kmax):
    up = [k for k in PANEL_LADDER if k > K]
    return min(up[0] if up else 2 * K, kmax)


def _assemble(s, xi0, Ks, kappa):
    kinds, los, his, yls, owner = [], [], [], [], []
    for j, (y, a, b) in enumerate(zip(s.y, s.x, s.xr)):
        kd, lo, hi = _panels_for(a, b, y, xi0, Ks[j], kappa)
        kinds.append(kd)
        los.append(lo)
        his.append(hi)
        yls.append(np.full(Ks[j], y))
        owner.append(np.full(Ks[j], j))
    return (np.concatenate(kinds), np.concatenate(los), np.concatenate(his),
            np.concatenate(yls), np.concatenate(owner))


def _pole(z, xi0):
    return -1.0 / (np.pi * (z - xi0))


def _solve_once(s, xi0, Ks, cfg):
    kind, lo, hi, yl, owner = _assemble(s, xi0, Ks, cfg.kappa)
    nodes = np.concatenate([panel_nodes(k, a, b)[0] for k, a, b in zip(kind, lo, hi)]) + 1j * np.repeat(yl, P)
    n, N = nodes.size, s.N
    node_owner = np.repeat(owner, P)
    A = np.zeros((n + N, n + N))
    A[:n, :n] = backend.potential_matrix(kind, lo, hi, yl, nodes)
    A[np.arange(n), n + node_owner] = -1.0
    A[n + node_owner, np.arange(n)] = np.tile(WEIGHTS, kind.size)
    rhs = np.zeros(n + N)
    rhs[:n] = -_pole(nodes, xi0).imag
    x = np.linalg.solve(A, rhs)
    q, c = x[:n], x[n:]
    # defect of Im Psi = c_j between nodes
    probes, powner = [], []
    for k, a, b, y, j in zip(kind, lo, hi, yl, owner):
        if k == INTERIOR:
            px = 0.5 * (a + b) + 0.5 * (b - a) * _PROBE_S
        elif k == LEFT:
            px = a + (b - a) * (0.5 * (_PROBE_S + 1)) ** 2
        else:
            px = b - (b - a) * (0.5 * (1 - _PROBE_S)) ** 2
        probes.append(px + 1j * y)
        powner.append(np.full(px.size, j))
    probes = np.concatenate(probes)
    powner = np.concatenate(powner)
    val = backend.potential_matrix(kind, lo, hi, yl, probes) @ q + _pole(probes, xi0).imag
    defect = np.abs(val - c[powner])
    per_slit = np.zeros(N)
    np.maximum.at(per_slit, powner, defect)
    return kind, lo, hi, yl, owner, q, c, per_slit


class _Cache:
    """LRU cache of kernel solutions, optionally mirrored to KL_CACHE_DIR."""

    def __init__(self, maxsize=16384):
        self.maxsize = maxsize
        self._d = OrderedDict()
        self._lock = threading.Lock()
        self.hits = self.misses = 0

    @staticmethod
    def key(s, xi0, cfg):
        # exact keys: a hit never depends on which nearby state was solved first
        return (np.append(s.vector, float(xi0)).tobytes(), cfg.key())

    def get(self, k):
        with self._lock:
            sol = self._d.get(k)
            if sol is not None:
                self._d.move_to_end(k)
                self.hits += 1
                return sol
        sol = self._disk_get(k)
        with self._lock:
            if sol is None:
                self.misses += 1
            else:
                self.hits += 1
                self._d[k] = sol
        return sol

    def put(self, k, sol):
        with self._lock:
            self._d[k] = sol
            self._d.move_to_end(k)
            while len(self._d) > self.maxsize:
                self._d.popitem(last=False)
        self._disk_put(k, sol)

    def clear(self):
        with self._lock:
            self._d.clear()
            self.hits = self.misses = 0

    @staticmethod
    def _path(k):
        root = os.environ.get("KL_CACHE_DIR")
        if not root:
            return None
        h = hashlib.sha1(repr(k).encode()).hexdigest()
        return os.path.join(root, h[:2], h + ".npz")

    def _disk_get(self, k):
        path = self._path(k)
        if path is None or not os.path.exists(path):
            return None
        try:
            with np.load(path) as d:
                s = SlitVector(d["y"], d["x"], d["xr"])
                return KernelSolution(s, float(d["xi0"]), d["kind"], d["lo"], d["hi"], d["yl"],
                                      d["owner"], d["q"], d["c"], float(d["residual"]), d["M"])
        except (OSError, KeyError, ValueError):  # corrupt entry: ignore and recompute
            return None

    def _disk_put(self, k, sol):
        path = self._path(k)
        if path is None:
            return
        os.makedirs(os.path.dirname(path), exist_ok=True)
        tmp = f"{path}.{os.getpid()}.{threading.get_ident()}.tmp.npz"
        np.savez(tmp, y=sol.s.y, x=sol.s.x, xr=sol.s.xr, xi0=sol.xi0, kind=sol.kind, lo=sol.lo,
                 hi=sol.hi, yl=sol.yl, owner=sol.owner, q=sol.q, c=sol.c, residual=sol.residual, M=sol.M)
        os.replace(tmp, path)


CACHE = _Cache()


def solve_kernel(s: SlitVector, xi0: float, cfg: KernelConfig | None = None) -> KernelSolution:
    """Construct Psi_s(., xi0).

    Raises PointTooClose if xi0 touches a slit and IllConditioned if the
    collocation defect stays above ``cfg.fail_tol`` at the largest size.
    """
    cfg = cfg or DEFAULT_CONFIG
    xi0 = float(xi0)
    if not s.N:
        e = np.empty(0)
        return KernelSolution(s, xi0, np.empty(0, np.int8), e, e, e, np.empty(0, int), e, e, 0.0,
                              np.empty(0, int))
    R = distance_R(xi0, s)
    if R <= EPS_GEOM:
        raise PointTooClose(f"xi0={xi0} lies within {EPS_GEOM} of a slit")
    if cfg.cache:
        k = CACHE.key(s, xi0, cfg)
        hit = CACHE.get(k)
        if hit is not None:
            return hit
    Ks = _start_K(s, xi0, cfg)
    kmax = max(cfg.M_max // P, 2)
    scale = np.pi * R
    while True:
        kind, lo, hi, yl, owner, q, c, per_slit = _solve_once(s, xi0, Ks, cfg)
        rel = per_slit * scale
        bad = [j for j in range(s.N) if rel[j] > cfg.tol and Ks[j] < kmax]
        if not bad:
            break
        for j in bad:
            Ks[j] = _next_K(Ks[j], kmax)
    resid = float(rel.max())
    if resid > cfg.fail_tol:
        raise IllConditioned(f"collocation residual {resid:.3e} exceeds {cfg.fail_tol:g} at M={cfg.M_max}")
    if resid > cfg.tol:
        log.debug("kernel residual %.2e above target %.0e at maximal size", resid, cfg.tol)
    sol = KernelSolution(s, xi0, kind, lo, hi, yl, owner, q, c, resid, np.array(Ks) * P)
    if cfg.cache:
        CACHE.put(k, sol)
    return sol


def _check_points(sol, z):
    s = sol.s
    if np.any(z == sol.xi0):
        raise EvalOnSingularity("evaluation at the pole xi0")
    if s.N:
        d = np.minimum(slit_distance(z, s), slit_distance(np.conj(z), s))
        if np.any(d <= EPS_GEOM):
            raise EvalOnSingularity("evaluation point on a slit")


def eval_h(sol: KernelSolution, z, check=True):
    """Regular part H = Psi + 1/(pi (z - xi0)); finite at xi0."""
    z_in = np.asarray(z, dtype=complex)
    z = np.atleast_1d(z_in).ravel()
    if not sol.s.N:
        out = np.zeros(z.size, dtype=complex)
    else:
        if check and sol.s.N:
            d = np.minimum(slit_distance(z, sol.s), slit_distance(np.conj(z), sol.s))
            if np.any(d <= EPS_GEOM):
                raise EvalOnSingularity("evaluation point on a slit")
        direct = np.ones(sol.kind.size, dtype=np.int8)
        out = 1j * backend.charge_field(sol.kind, sol.lo, sol.hi, sol.yl, sol.q, z, direct)
    return out.reshape(z_in.shape) if z_in.ndim else complex(out[0])


def eval_psi(sol: KernelSolution, z, check=True):
    """Psi_s(z, xi0) for z in D(s), its mirror image, or on the real axis."""
    z_in = np.asarray(z, dtype=complex)
    z = np.atleast_1d(z_in).ravel()
    if check:
        _check_points(sol, z)
    out = _pole(z, sol.xi0) + eval_h(sol, z, check=False)
    return out.reshape(z_in.shape) if z_in.ndim else complex(out[0])


def psi_endpoints(sol: KernelSolution):
    """Psi at the left and right slit endpoints.

    Im Psi equals the slit constant there. For Re Psi, the slit's own
    direct term vanishes exactly at its endpoints (every node is seen at
    the same angle and the net charge is zero), so it is omitted.
    """
    s = sol.s
    left = np.empty(s.N, dtype=complex)
    right = np.empty(s.N, dtype=complex)
    for j in range(s.N):
        direct = (sol.owner != j).astype(np.int8)
        pts = np.array([s.left[j], s.right[j]])
        f = backend.charge_field(sol.kind, sol.lo, sol.hi, sol.yl, sol.q, pts, direct)
        re = (_pole(pts, sol.xi0) + 1j * f).real
        left[j] = re[0] + 1j * sol.c[j]
        right[j] = re[1] + 1j * sol.c[j]
    return left, right


def drift_from_solution(sol: KernelSolution) -> np.ndarray:
    if not sol.s.N:
        return np.empty(0)
    left, right = psi_endpoints(sol)
    return -2.0 * np.pi * np.concatenate([sol.c, left.real, right.real])


def drift_b(s: SlitVector, xi0: float, cfg: KernelConfig | None = None) -> np.ndarray:
    """Slit velocities: heights, left endpoints, right endpoints."""
    return drift_from_solution(solve_kernel(s, xi0, cfg))


def bmd_from_solution(sol: KernelSolution) -> float:
    if not sol.s.N:
        return 0.0
    h = eval_h(sol, sol.xi0, check=False)
    R = distance_R(sol.xi0, sol.s)
    if abs(h.imag) * R > 1e-10 * max(1.0, abs(h.real) * R):
        raise IllConditioned(f"BMD constant has imaginary part {h.imag:.3e}")
    return float(2.0 * np.pi * h.real)


def bmd_constant(s: SlitVector, xi0: float, cfg: KernelConfig | None = None) -> float:
    """b_BMD = 2 pi H(xi0, xi0)."""
    return bmd_from_solution(solve_kernel(s, xi0, cfg))
