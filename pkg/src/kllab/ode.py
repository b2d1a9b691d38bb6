"""Dormand-Prince 5(4) integrator with step caps, stop tests and Hermite dense output."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import KLError, StepUnderflow

# Dormand-Prince tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


class RejectStep(Exception):
    """Raised by a right-hand side to signal a state outside its domain."""


@dataclass
class DenseSolution:
    """Accepted steps with derivatives, for cubic Hermite interpolation."""

    t: np.ndarray
    y: np.ndarray
    f: np.ndarray
    status: str = "completed"
    info: dict = field(default_factory=dict)

    def __call__(self, tq):
        tq = np.asarray(tq, dtype=float)
        scalar = tq.ndim == 0
        tq = np.atleast_1d(tq)
        i = np.clip(np.searchsorted(self.t, tq, side="right") - 1, 0, len(self.t) - 2)
        if len(self.t) == 1:
            out = np.repeat(self.y[:1], tq.size, axis=0)
            return out[0] if scalar else out
        t0, t1 = self.t[i], self.t[i + 1]
        h = (t1 - t0)[:, None]
        th = ((tq - t0) / (t1 - t0))[:, None]
        y0, y1, f0, f1 = self.y[i], self.y[i + 1], self.f[i], self.f[i + 1]
        h00 = 2 * th ** 3 - 3 * th ** 2 + 1
        h10 = th ** 3 - 2 * th ** 2 + th
        h01 = -2 * th ** 3 + 3 * th ** 2
        h11 = th ** 3 - th ** 2
        out = h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1
        return out[0] if scalar else out


def _norm(v):
    return np.sqrt(np.mean(np.abs(v) ** 2)) if v.size else 0.0


def dopri45(fun, t0, y0, t_end, *, rtol=1e-8, atol=1e-10, h0=None, max_step=np.inf,
            step_cap=None, stop=None, h_min=1e-12, max_steps=1_000_000, rejects=(RejectStep, KLError)):
    """Integrate y' = fun(t, y) from t0 towards t_end.

    ``step_cap(t, y)`` bounds the next step; ``stop(t, y)`` is tested after
    each accepted step and ends the run (status "stopped") when it returns
    a truthy value, which is stored in ``info["stop"]``. Exceptions listed in
    ``rejects`` raised by ``fun`` reject the step and shrink it.
    Raises StepUnderflow when the step falls below ``h_min``.
    """
    y = np.array(y0, dtype=complex if np.iscomplexobj(y0) else float)
    t = float(t0)
    f = np.asarray(fun(t, y))
    ts, ys, fs = [t], [y.copy()], [f.copy()]
    if h0 is None:
        sc = atol + rtol * np.abs(y)
        d0, d1 = _norm(y / sc), _norm(f / sc)
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h = min(h, abs(t_end - t0))
    else:
        h = h0
    status, info = "completed", {}
    k = np.empty((7,) + y.shape, dtype=y.dtype)
    nsteps = 0
    while t < t_end:
        cap = max_step if step_cap is None else min(max_step, step_cap(t, y))
        h = min(h, cap)
        last = t + h >= t_end
        if last:
            h = t_end - t
        if h < h_min:
            exc = StepUnderflow(f"step {h:.3e} below {h_min:g} at t={t:.12g}")
            exc.solution = DenseSolution(np.array(ts), np.array(ys), np.array(fs), "failed")
            raise exc
        try:
            k[0] = f
            for i in range(1, 7):
                yi = y + h * np.tensordot(_A[i], k[:i], axes=1)
                k[i] = fun(t + _C[i] * h, yi)
        except rejects:
            h *= 0.25
            continue
        ynew = yi  # stage 7 is evaluated at the 5th-order solution
        err = h * np.tensordot(_E, k, axes=1)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
        en = _norm(err / sc)
        if en <= 1.0:
            t = t_end if last else t + h
            y = ynew
            f = k[6].copy()
            ts.append(t)
            ys.append(y.copy())
            fs.append(f)
            nsteps += 1
            fac = 5.0 if en == 0 else min(5.0, 0.9 * en ** -0.2)
            h *= fac
            if stop is not None:
                why = stop(t, y)
                if why:
                    status, info = "stopped", {"stop": why}
                    break
            if nsteps >= max_steps:
                status, info = "max_steps", {}
                break
        else:
            h *= max(0.2, 0.9 * en ** -0.2)
    return DenseSolution(np.array(ts), np.array(ys), np.array(fs), status, info)
