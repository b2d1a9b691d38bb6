"""Compiled panel kernels against the numpy fallback.

Times the two hot loops (matrix assembly and field evaluation) on the same
inputs with both implementations, checks that they agree, then times a full
kernel solve and a short slit evolution in fresh interpreters with and
without ``KL_PURE_PYTHON``.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from kllab import _panels_py
from kllab.geometry import validate
from kllab.kernel import KernelConfig, P, _assemble, _start_K, panel_nodes

try:
    from kllab import _panels as _compiled
except ImportError:
    _compiled = None

CONFIGS = {
    "one slit": (validate([1.0], [-1.0], [1.0]), 0.0),
    "thin slit y=0.02": (validate([0.02], [-1.0], [1.0]), 0.0),
    "three slits": (validate([1.0, 0.5, 1.5], [-2.0, 0.5, -0.5], [-0.5, 1.5, 1.0]), 0.2),
}

END_TO_END = {
    "solve_kernel x20": (
        "import time; from kllab.geometry import validate; from kllab.kernel import solve_kernel, KernelConfig\n"
        "s = validate([1.0, 0.5, 1.5], [-2.0, 0.5, -0.5], [-0.5, 1.5, 1.0])\n"
        "t = time.perf_counter()\n"
        "for i in range(20): solve_kernel(s, 0.01 * i, KernelConfig(cache=False))\n"
        "print(time.perf_counter() - t)"),
    "evolve_slits t=0.3": (
        "import time; from kllab import validate, evolve_slits, DeterministicDriver\n"
        "s = validate([1.0, 0.6], [-1.0, 0.4], [0.2, 1.3])\n"
        "t = time.perf_counter(); evolve_slits(s, DeterministicDriver.expression('0.3*sin(2*t)'), 0.3)\n"
        "print(time.perf_counter() - t)"),
}


def inputs(s, xi0):
    cfg = KernelConfig()
    kind, lo, hi, yl, _ = _assemble(s, xi0, _start_K(s, xi0, cfg), cfg.kappa)
    nodes = np.concatenate([panel_nodes(k, a, b)[0] for k, a, b in zip(kind, lo, hi)]) + 1j * np.repeat(yl, P)
    q = np.random.default_rng(0).standard_normal(nodes.size)
    probes = np.random.default_rng(1).uniform(-3, 3, 2000) + 1j * np.random.default_rng(2).uniform(0.05, 3, 2000)
    direct = np.ones(kind.size, dtype=np.int8)
    return kind, lo, hi, yl, nodes, q, probes, direct


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def hot_loops(repeat):
    rows = []
    for name, (s, xi0) in CONFIGS.items():
        kind, lo, hi, yl, nodes, q, probes, direct = inputs(s, xi0)
        row = {"config": name, "nodes": int(nodes.size)}
        for label, mod in (("numpy", _panels_py), ("cython", _compiled)):
            if mod is None:
                continue
            row[f"matrix_{label}"] = best(lambda: mod.potential_matrix(kind, lo, hi, yl, nodes), repeat)
            row[f"field_{label}"] = best(lambda: mod.charge_field(kind, lo, hi, yl, q, probes, direct), repeat)
        if _compiled is not None:
            a = _panels_py.potential_matrix(kind, lo, hi, yl, nodes)
            b = _compiled.potential_matrix(kind, lo, hi, yl, nodes)
            fa = _panels_py.charge_field(kind, lo, hi, yl, q, probes, direct)
            fb = _compiled.charge_field(kind, lo, hi, yl, q, probes, direct)
            row["max_diff"] = float(max(np.abs(a - b).max(), np.abs(fa - fb).max()))
        rows.append(row)
    return rows


def end_to_end():
    rows = []
    for name, code in END_TO_END.items():
        row = {"task": name}
        for label, env in (("cython", {}), ("numpy", {"KL_PURE_PYTHON": "1"})):
            if label == "cython" and _compiled is None:
                continue
            out = subprocess.run([sys.executable, "-c", code], env={**os.environ, **env}, capture_output=True,
                                 text=True, check=True)
            row[label] = float(out.stdout.strip())
        rows.append(row)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args()
    if _compiled is None:
        print("compiled extension not built; timing the numpy fallback only")
    hot = hot_loops(args.repeat)
    print(f"{'config':<18}{'nodes':>6}{'matrix np':>11}{'matrix cy':>11}{'field np':>10}{'field cy':>10}"
          f"{'speedup':>9}{'max diff':>10}")
    for r in hot:
        cy_m, cy_f = r.get("matrix_cython", np.nan), r.get("field_cython", np.nan)
        speed = (r["matrix_numpy"] + r["field_numpy"]) / (cy_m + cy_f)
        print(f"{r['config']:<18}{r['nodes']:>6}{r['matrix_numpy'] * 1e3:>9.2f}ms{cy_m * 1e3:>9.2f}ms"
              f"{r['field_numpy'] * 1e3:>8.2f}ms{cy_f * 1e3:>8.2f}ms{speed:>8.1f}x{r.get('max_diff', np.nan):>10.1e}")
    e2e = end_to_end()
    print()
    for r in e2e:
        cy = r.get("cython", np.nan)
        print(f"{r['task']:<22} numpy {r['numpy']:7.3f}s   cython {cy:7.3f}s   {r['numpy'] / cy:5.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"hot_loops": hot, "end_to_end": e2e}, fh, indent=1)


if __name__ == "__main__":
    main()
