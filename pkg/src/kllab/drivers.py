"""Deterministic driving functions xi(t) on [0, inf)."""

from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

_FUNCS = {name: getattr(np, name) for name in
          ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "sinh", "cosh", "tanh", "arctan", "minimum", "maximum")}
_CONSTS = {"pi": math.pi, "e": math.e}
_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
          ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod)


def compile_expr(text: str) -> Callable:
    """Compile an arithmetic expression in ``t`` (numpy functions, pi, e)."""
    tree = ast.parse(text, mode="eval")
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ValueError(f"disallowed syntax in driver expression: {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in _FUNCS and node.id not in _CONSTS and node.id != "t":
            raise ValueError(f"unknown name {node.id!r} in driver expression")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ValueError("only plain calls of whitelisted functions are allowed")
    code = compile(tree, "<driver>", "eval")
    env = {"__builtins__": {}, **_FUNCS, **_CONSTS}
    return lambda t: eval(code, env, {"t": t})


@dataclass(frozen=True)
class DeterministicDriver:
    """Either a callable ``fn`` or a piecewise-linear table ``(times, values)``.

    Tables are held constant after their last time.
    """

    fn: Callable | None = None
    times: np.ndarray | None = None
    values: np.ndarray | None = None
    description: str = ""

    def __post_init__(self):
        if (self.fn is None) == (self.times is None):
            raise ValueError("give exactly one of fn or (times, values)")
        if self.times is not None:
            t = np.asarray(self.times, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if t.ndim != 1 or t.shape != v.shape or t.size < 1:
                raise ValueError("driver table needs matching 1-d times and values")
            if np.any(np.diff(t) <= 0) or t[0] > 0:
                raise ValueError("driver table times must start at or before 0 and increase strictly")
            object.__setattr__(self, "times", t)
            object.__setattr__(self, "values", v)

    def __call__(self, t):
        if self.fn is not None:
            out = self.fn(t)
            return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=float)
        out = np.interp(t, self.times, self.values)
        return float(out) if np.ndim(out) == 0 else out

    # constructors
    @classmethod
    def constant(cls, value: float) -> "DeterministicDriver":
        v = float(value)
        return cls(fn=lambda t: v + 0.0 * np.asarray(t, dtype=float), description=f"const:{v!r}")

    @classmethod
    def table(cls, times, values) -> "DeterministicDriver":
        return cls(times=times, values=values, description="table")

    @classmethod
    def expression(cls, text: str) -> "DeterministicDriver":
        f = compile_expr(text)

        def fn(t):
            return np.asarray(f(np.asarray(t, dtype=float)), dtype=float) + 0.0 * np.asarray(t, dtype=float)

        return cls(fn=fn, description=f"expr:{text}")

    def scaled(self, c: float) -> "DeterministicDriver":
        """The driver t -> c xi(t / c^2) of the scaled configuration."""
        return DeterministicDriver(fn=lambda t: c * np.asarray(self(np.asarray(t) / c ** 2)),
                                   description=f"scaled({c}):{self.description}")

    def shifted(self, a: float) -> "DeterministicDriver":
        return DeterministicDriver(fn=lambda t: a + np.asarray(self(t)), description=f"shift({a}):{self.description}")

    def to_dict(self) -> dict:
        if self.times is not None:
            return {"type": "table", "t": self.times.tolist(), "xi": self.values.tolist()}
        kind, _, rest = self.description.partition(":")
        if kind == "const":
            return {"type": "const", "value": float(rest)}
        if kind == "expr":
            return {"type": "expr", "expr": rest}
        raise ValueError("this driver has no serial form")


def from_dict(d) -> DeterministicDriver:
    """Build from ``{"type": "const"|"table"|"expr", ...}`` or a bare number."""
    if isinstance(d, (int, float)):
        return DeterministicDriver.constant(d)
    kind = d.get("type")
    if kind == "const":
        return DeterministicDriver.constant(d["value"])
    if kind == "table":
        return DeterministicDriver.table(d["t"], d["xi"])
    if kind == "expr":
        return DeterministicDriver.expression(d["expr"])
    raise ValueError(f"unknown driver type {kind!r}")


def load(path) -> DeterministicDriver:
    with open(path) as fh:
        return from_dict(json.load(fh))
