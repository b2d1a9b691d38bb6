"""Standard slit domains: the upper half-plane minus N horizontal segments.

A configuration is stored as the flat vector
``s = (y_1..y_N, x_1..x_N, xr_1..xr_N)``; slit j is the closed segment
from ``x_j + i y_j`` to ``xr_j + i y_j``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptySlit, NonpositiveHeight, OverlapAtEqualHeight

EPS_GEOM = 1e-12


@dataclass(frozen=True, eq=False)
class SlitVector:
    """Validated slit configuration (immutable)."""

    y: np.ndarray
    x: np.ndarray
    xr: np.ndarray

    def __post_init__(self):
        for name in ("y", "x", "xr"):
            a = np.array(getattr(self, name), dtype=float).reshape(-1)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def N(self) -> int:
        return self.y.size

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.y, self.x, self.xr])

    @property
    def left(self) -> np.ndarray:
        """Left endpoints z_j as complex numbers."""
        return self.x + 1j * self.y

    @property
    def right(self) -> np.ndarray:
        return self.xr + 1j * self.y

    @property
    def y0(self) -> float:
        """Lowest slit height (inf for the empty configuration)."""
        return float(self.y.min()) if self.N else np.inf

    def diameter(self) -> float:
        """Diameter of the union of slits and the origin."""
        if not self.N:
            return 0.0
        pts = np.concatenate([self.left, self.right, [0.0]])
        return float(np.abs(pts[:, None] - pts[None, :]).max())

    def __eq__(self, other):
        return isinstance(other, SlitVector) and np.array_equal(self.vector, other.vector)

    def __hash__(self):
        return hash(self.vector.tobytes())

    def __repr__(self):
        segs = ", ".join(f"[{a:.6g}, {b:.6g}]@{h:.6g}" for h, a, b in zip(self.y, self.x, self.xr))
        return f"SlitVector({segs})"

    @classmethod
    def empty(cls) -> "SlitVector":
        return cls(np.empty(0), np.empty(0), np.empty(0))

    def to_records(self) -> list:
        return [{"y": float(h), "x": float(a), "xr": float(b)} for h, a, b in zip(self.y, self.x, self.xr)]

    def to_json(self) -> str:
        return json.dumps(self.to_records())


def validate(s, x=None, xr=None) -> SlitVector:
    """Check a raw configuration and return a SlitVector.

    Accepts either a flat 3N vector or three arrays ``(y, x, xr)``.
    Slit indices in errors are 1-based.
    """
    if x is None:
        v = np.asarray(s, dtype=float).reshape(-1)
        if v.size % 3:
            raise ValueError(f"slit vector length {v.size} is not a multiple of 3")
        n = v.size // 3
        y, x, xr = v[:n], v[n:2 * n], v[2 * n:]
    else:
        y, x, xr = (np.asarray(a, dtype=float).reshape(-1) for a in (s, x, xr))
        if not (y.size == x.size == xr.size):
            raise ValueError("y, x, xr must have equal lengths")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x)) and np.all(np.isfinite(xr))):
        raise ValueError("slit coordinates must be finite")
    for j in range(y.size):
        if not y[j] > 0:
            raise NonpositiveHeight(j + 1)
        if not x[j] < xr[j]:
            raise EmptySlit(j + 1)
    for j in range(y.size):
        for k in range(j + 1, y.size):
            if y[j] == y[k] and not (xr[j] < x[k] or xr[k] < x[j]):
                raise OverlapAtEqualHeight(j + 1, k + 1)
    return SlitVector(y, x, xr)


def from_records(records) -> SlitVector:
    """Build from a list of ``{"y", "x", "xr"}`` mappings (runs validate)."""
    if isinstance(records, dict) and "slits" in records:
        records = records["slits"]
    y = [float(r["y"]) for r in records]
    x = [float(r["x"]) for r in records]
    xr = [float(r["xr"]) for r in records]
    return validate(y, x, xr)


def from_json(text: str) -> SlitVector:
    return from_records(json.loads(text))


def load(path) -> SlitVector:
    with open(path) as fh:
        return from_json(fh.read())


def _seg_dist(p, y, a, b):
    """Distance from complex points p to the horizontal segments [a, b] + iy."""
    px = np.clip(np.real(p), a, b)
    return np.hypot(np.real(p) - px, np.imag(p) - y)


def distance_R(xi0: float, s: SlitVector) -> float:
    """Smallest distance from the boundary point xi0 to a slit (inf if N = 0)."""
    if not s.N:
        return np.inf
    return float(_seg_dist(complex(xi0), s.y, s.x, s.xr).min())


def slit_distance(z, s: SlitVector) -> np.ndarray:
    """Distance from each point of z to the nearest slit."""
    z = np.asarray(z, dtype=complex)
    if not s.N:
        return np.full(z.shape, np.inf)
    d = _seg_dist(z[..., None], s.y, s.x, s.xr)
    return d.min(axis=-1)


def translate(s: SlitVector, c: float) -> SlitVector:
    return SlitVector(s.y, s.x + c, s.xr + c)


def scale(s: SlitVector, c: float) -> SlitVector:
    if not c > 0:
        raise ValueError("scale factor must be positive")
    return SlitVector(c * s.y, c * s.x, c * s.xr)


def contains(s: SlitVector, z: complex, eps: float = EPS_GEOM) -> bool:
    """True iff z lies in the slit domain D(s)."""
    z = complex(z)
    if not z.imag > 0:
        return False
    return bool(slit_distance(z, s) > eps) if s.N else True
