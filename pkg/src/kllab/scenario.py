"""Scenario files, dispatch to the numerical modules, and run manifests.

A scenario is a TOML or JSON mapping::

    name = "single-slit"
    command = "evolve"          # kernel | evolve | map | skle | mc | transform | verify
    seed = 42                   # required by skle, mc and transform-on-skle
    tmax = 5.0
    slits = [{y = 1.0, x = -1.0, xr = 1.0}]
    driver = {type = "const", value = 0.0}

    [tolerances]
    rtol = 1e-8

Relative file references (``slits_file``, ``driver_file``, ``run``,
``points_file``) are resolved against the scenario's directory.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import os
import re
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .chain import ChainConfig, evolve_map
from .drivers import DeterministicDriver
from .drivers import from_dict as driver_from_dict
from .errors import ConfigInvalid, InvalidSlits, KLError
from .geometry import SlitVector, contains, from_records
from .kernel import KernelConfig, bmd_from_solution, eval_psi, solve_kernel
from .oracle import LatticeConfig, oracle_kernel_fd
from .skle import CoefficientSpec, SkleConfig, mc_explosion, parse_coefficient, sample_path
from .slit_ode import ODEConfig, evolve_slits, explosion_report, write_rows
from .transform import IotaConfig, evolve_iota, ito_drive_check

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

DEFAULT_GRID = "81,41,-4,4,0.05,4"
COMMANDS = ("kernel", "evolve", "map", "skle", "mc", "transform", "verify")
STOCHASTIC = ("skle", "mc")

# field -> accepted python types
FIELDS = {
    "name": (str,), "command": (str,), "seed": (int,), "out": (str,),
    "slits": (list, dict), "slits_file": (str,), "driver": (dict, int, float), "driver_file": (str,),
    "tmax": (int, float), "dt": (int, float), "xi": (int, float), "xi0": (int, float),
    "paths": (int,), "alpha": (str,), "b": (str,),
    "grid": (str, list), "points": (list,), "points_file": (str,),
    "bmd": (bool,), "oracle": (bool,), "oracle_h": (int, float),
    "run": (str,), "path_index": (int,), "suites": (list, str), "quick": (bool,),
    "tolerances": (dict,), "jobs": (int,), "output": (str,),
}
TOLERANCES = {"rtol", "atol", "c_step", "eps_explode", "c_sub", "eps_swallow", "kernel_tol", "n_nodes", "n_keep",
              "iota_dt"}


# loading -------------------------------------------------------------------------

def _parse_text(text: str, suffix: str, where: str) -> dict:
    if suffix == ".json" or (suffix != ".toml" and text.lstrip().startswith("{")):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{where}: line {exc.lineno}: {exc.msg}") from None
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        line = f"line {m.group(1)}: " if m else ""
        raise ConfigInvalid(f"{where}: {line}{exc}") from None


def load_scenario(path) -> dict:
    """Read a TOML or JSON scenario; file references become absolute."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigInvalid(f"{path}: {exc.strerror}") from None
    sc = _parse_text(text, path.suffix.lower(), str(path))
    for key in ("slits_file", "driver_file", "run", "points_file", "out"):
        if isinstance(sc.get(key), str) and not os.path.isabs(sc[key]):
            sc[key] = str((path.parent / sc[key]).resolve())
    return sc


def _field_error(field, msg):
    return ConfigInvalid(f"field {field!r}: {msg}")


def check_scenario(sc: dict) -> dict:
    """Schema check; returns a normalised copy."""
    if not isinstance(sc, dict):
        raise ConfigInvalid("a scenario must be a mapping")
    sc = copy.deepcopy(sc)
    for k, v in sc.items():
        if k not in FIELDS:
            raise _field_error(k, "unknown field")
        if isinstance(v, bool) and bool not in FIELDS[k]:
            raise _field_error(k, f"expected {'/'.join(t.__name__ for t in FIELDS[k])}, got bool")
        if not isinstance(v, FIELDS[k]):
            raise _field_error(k, f"expected {'/'.join(t.__name__ for t in FIELDS[k])}, got {type(v).__name__}")
    cmd = sc.get("command")
    if cmd not in COMMANDS:
        raise _field_error("command", f"must be one of {', '.join(COMMANDS)}")
    for k in sc.get("tolerances", {}):
        if k not in TOLERANCES:
            raise _field_error(f"tolerances.{k}", "unknown tolerance")
    if cmd in STOCHASTIC and "seed" not in sc:
        raise _field_error("seed", f"required for command {cmd!r}")
    for f in ("slits_file", "driver_file", "run", "points_file"):
        if f in sc and not os.path.exists(sc[f]):
            raise _field_error(f, f"file {sc[f]} does not exist")
    if cmd not in ("verify", "transform") and "slits" not in sc and "slits_file" not in sc:
        raise _field_error("slits", "missing (give slits or slits_file)")
    if cmd in ("evolve", "map") and "driver" not in sc and "driver_file" not in sc:
        raise _field_error("driver", "missing (give driver or driver_file)")
    if cmd in ("evolve", "map", "skle", "mc") and "tmax" not in sc:
        raise _field_error("tmax", "missing")
    if cmd == "transform" and "run" not in sc:
        raise _field_error("run", "missing (path of a run manifest)")
    if "tmax" in sc and not sc["tmax"] > 0:
        raise _field_error("tmax", "must be positive")
    if "dt" in sc and not sc["dt"] > 0:
        raise _field_error("dt", "must be positive")
    if "output" in sc and (os.path.basename(sc["output"]) != sc["output"] or sc["output"] == "manifest.json"):
        raise _field_error("output", "must be a plain file name other than manifest.json")
    # validate geometry now so errors name the field
    slits_of(sc)
    return sc


def slits_of(sc: dict) -> SlitVector:
    if "slits" not in sc and "slits_file" not in sc:
        return SlitVector.empty()
    try:
        if "slits_file" in sc:
            with open(sc["slits_file"]) as fh:
                return from_records(json.load(fh))
        return from_records(sc["slits"])
    except InvalidSlits as exc:
        raise _field_error("slits", f"{type(exc).__name__}: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise _field_error("slits", f"malformed ({exc})") from None


def driver_of(sc: dict) -> DeterministicDriver:
    try:
        if "driver_file" in sc:
            with open(sc["driver_file"]) as fh:
                return driver_from_dict(json.load(fh))
        return driver_from_dict(sc["driver"])
    except (KeyError, TypeError, ValueError, SyntaxError) as exc:
        raise _field_error("driver", f"malformed ({exc})") from None


def _tol(sc):
    return sc.get("tolerances", {})


def kernel_cfg(sc) -> KernelConfig:
    tol = _tol(sc)
    return KernelConfig(tol=tol["kernel_tol"]) if "kernel_tol" in tol else KernelConfig()


def ode_cfg(sc) -> ODEConfig:
    tol = _tol(sc)
    kw = {k: float(tol[k]) for k in ("rtol", "atol", "c_step", "eps_explode") if k in tol}
    return ODEConfig(kernel=kernel_cfg(sc), **kw)


def skle_cfg(sc) -> SkleConfig:
    tol = _tol(sc)
    kw = {k: float(tol[k]) for k in ("c_sub", "eps_explode") if k in tol}
    return SkleConfig(kernel=kernel_cfg(sc), **kw)


def coeffs_of(sc) -> CoefficientSpec:
    try:
        return CoefficientSpec(parse_coefficient(sc.get("alpha", "const:2.449489742783178"), "alpha"),
                               parse_coefficient(sc.get("b", "bmd:-1"), "b"))
    except ValueError as exc:
        raise ConfigInvalid(f"coefficients: {exc}") from None


def canonical(sc: dict) -> str:
    return json.dumps(sc, sort_keys=True, separators=(",", ":"))


def scenario_hash(sc: dict) -> str:
    return hashlib.sha256(canonical(sc).encode()).hexdigest()


# outputs ---------------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, obj):
    """Deterministic JSON (sorted keys, repr floats), written atomically."""
    text = json.dumps(obj, sort_keys=True, indent=1, default=_jsonable) + "\n"
    _atomic_write(path, text)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, SlitVector):
        return o.to_records()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _atomic_write(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def read_csv(path):
    """Header and float rows of a CSV written here (empty cells become nan)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(v) if v != "" else np.nan for v in r] for r in rows[1:]])
    return rows[0], data


def grid_points(spec):
    """``"nx,ny,xmin,xmax,ymin,ymax"`` (or a list) -> flat array of grid points."""
    try:
        parts = spec.split(",") if isinstance(spec, str) else list(spec)
        nx, ny = int(parts[0]), int(parts[1])
        xmin, xmax, ymin, ymax = (float(p) for p in parts[2:6])
    except (ValueError, IndexError, TypeError):
        raise _field_error("grid", "expected nx,ny,xmin,xmax,ymin,ymax") from None
    if nx < 1 or ny < 1 or not (xmax > xmin and ymax > ymin):
        raise _field_error("grid", "empty grid")
    X, Y = np.meshgrid(np.linspace(xmin, xmax, nx), np.linspace(ymin, ymax, ny))
    return (X + 1j * Y).ravel()


def points_of(sc):
    if "points_file" in sc:
        with open(sc["points_file"]) as fh:
            raw = json.load(fh)
    else:
        raw = sc.get("points", [])
    try:
        return np.array([complex(p[0], p[1]) if isinstance(p, (list, tuple)) else complex(p) for p in raw])
    except (TypeError, ValueError, IndexError):
        raise _field_error("points", "expected [[re, im], ...]") from None


# commands --------------------------------------------------------------------------

def run_kernel(sc, out: Path):
    s = slits_of(sc)
    xi0 = float(sc.get("xi", 0.0))
    sol = solve_kernel(s, xi0, kernel_cfg(sc))
    result = {"xi": xi0, "N": s.N, "residual": float(sol.residual), "bmd": bmd_from_solution(sol)}
    files = []
    if "grid" in sc or "output" in sc:
        z = grid_points(sc.get("grid", DEFAULT_GRID))
        keep = np.array([contains(s, zz) for zz in z])
        z = z[keep]
        psi = eval_psi(sol, z)
        write_rows(out / "grid.csv", ["re", "im", "psi_re", "psi_im"], np.column_stack([z.real, z.imag, psi.real,
                                                                                       psi.imag]))
        files.append("grid.csv")
    if sc.get("oracle", False):
        lat = oracle_kernel_fd(s, xi0, LatticeConfig(h=float(sc.get("oracle_h", 0.02))))
        X, Y = np.meshgrid(lat.x, lat.y)
        write_rows(out / "oracle.csv", ["re", "im", "im_psi"], np.column_stack([X.ravel(), Y.ravel(), lat.U.ravel()]))
        files.append("oracle.csv")
    return files, result


def run_evolve(sc, out: Path):
    s, drv = slits_of(sc), driver_of(sc)
    tr = evolve_slits(s, drv, float(sc["tmax"]), ode_cfg(sc))
    tr.write_csv(out / "traj.csv")
    result = {"status": tr.status, "zeta": tr.zeta, "reason": tr.reason, "n_steps": len(tr.t) - 1,
              "t_end": float(tr.t[-1])}
    if tr.status == "Exploded":
        rep = explosion_report(tr)
        result.update(min_height=rep["min_height"], final_R=float(rep["R_tail"][-1]))
    return ["traj.csv"], result


def run_map(sc, out: Path):
    s, drv = slits_of(sc), driver_of(sc)
    if "grid" in sc:
        z = grid_points(sc["grid"])
    else:
        z = points_of(sc)
    z = z[np.array([contains(s, zz) for zz in z], dtype=bool)]
    hist = evolve_map(s, drv, z, float(sc["tmax"]), ChainConfig(ode=ode_cfg(sc),
                                                                 **({"eps_swallow": _tol(sc)["eps_swallow"]}
                                                                    if "eps_swallow" in _tol(sc) else {})))
    g = hist.g[-1]
    with open(out / "hull.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z_re", "z_im", "swallow_time", "g_re", "g_im"])
        for zz, tau, gg in zip(z, hist.swallowed_at, g):
            w.writerow([f"{zz.real:.17g}", f"{zz.imag:.17g}", "" if np.isnan(tau) else f"{tau:.17g}",
                        f"{gg.real:.17g}", f"{gg.imag:.17g}"])
    result = {"status": hist.status, "zeta": hist.zeta, "n_points": int(z.size),
              "n_swallowed": int(np.sum(~np.isnan(hist.swallowed_at)))}
    return ["hull.csv"], result


def _mc(sc, out: Path, keep_paths: bool, jobs: int):
    s = slits_of(sc)
    res = mc_explosion((float(sc.get("xi0", 0.0)), s), coeffs_of(sc), float(sc["tmax"]), int(sc.get("paths", 1)),
                       base_seed=int(sc["seed"]), dt=float(sc.get("dt", 1e-2)), cfg=skle_cfg(sc), jobs=jobs,
                       keep_paths=keep_paths)
    files = []
    if keep_paths:
        for i, tr in enumerate(res.pop("trajectories")):
            name = f"path_{i:04d}.csv"
            tr.write_csv(out / name)
            files.append(name)
    rows = res.pop("paths")
    with open(out / "paths.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "status", "zeta", "final_R", "min_R", "n_steps"])
        for r in rows:
            z = "" if r["zeta"] is None else f"{r['zeta']:.17g}"
            w.writerow([r["index"], r["status"], z, f"{r['final_R']:.17g}", f"{r['min_R']:.17g}", r["n_steps"]])
    files.append("paths.csv")
    write_json(out / "summary.json", res)
    files.append("summary.json")
    keys = ("n_paths", "n_exploded", "n_failed", "p_hat", "ci95", "zeta_quantiles", "min_zeta",
            "n_zeta_below_bound", "all_final_R_below_eps")
    return files, {k: res[k] for k in keys}


def run_skle(sc, out, jobs=1):
    return _mc(sc, out, True, jobs)


def run_mc(sc, out, jobs=1):
    return _mc(sc, out, False, jobs)


def _source_path(run_manifest: dict, sc: dict):
    """Rebuild the driving path of an earlier run from its recorded scenario."""
    src = run_manifest["scenario"]
    s = slits_of(src)
    if src["command"] == "evolve":
        return s, driver_of(src), None
    if src["command"] in STOCHASTIC:
        i = int(sc.get("path_index", 0))
        if not 0 <= i < int(src.get("paths", 1)):
            raise _field_error("path_index", "outside the recorded run")
        path = sample_path((float(src.get("xi0", 0.0)), s), coeffs_of(src), float(src["tmax"]),
                           float(src.get("dt", 1e-2)), (int(src["seed"]), i), skle_cfg(src))
        return s, path, path
    raise _field_error("run", f"cannot transform a {src['command']!r} run")


def run_transform(sc, out: Path):
    with open(sc["run"]) as fh:
        man = json.load(fh)
    s, path, skle_path = _source_path(man, sc)
    t_end = float(skle_path.t[-1]) if skle_path is not None else float(man["scenario"]["tmax"])
    if skle_path is not None and skle_path.status == "Exploded":
        t_end = float(skle_path.t[max(0, int(0.9 * (len(skle_path.t) - 1)))])
    if skle_path is not None and skle_path.point_slits:
        # point slits are outside the kernel's reach
        t_end = min(t_end, min(t for _, t in skle_path.point_slits))
    tmax = min(float(sc.get("tmax", t_end)), t_end)
    tol = _tol(sc)
    icfg = IotaConfig(kernel=kernel_cfg(sc), **{k: tol[k] for k in ("n_nodes", "n_keep") if k in tol},
                      **({"dt": float(tol["iota_dt"])} if "iota_dt" in tol else {}))
    if skle_path is not None:
        # stop on a grid point of the path
        k = int(np.searchsorted(skle_path.t, tmax, side="right")) - 1
        tmax = float(skle_path.t[k])
    pts = points_of(sc)
    hist = evolve_iota(s, path, tmax, pts, icfg)
    header = ["t", "U", "iota1", "iota2", "a0"]
    cols = [hist.t, hist.U, hist.iota1, hist.iota2, hist.a0]
    for k in range(pts.size):
        header += [f"p{k + 1}_re", f"p{k + 1}_im"]
        cols += [hist.values[:, k].real, hist.values[:, k].imag]
    write_rows(out / "iota.csv", header, np.column_stack(cols))
    result = {"t_end": tmax, "n_steps": int(hist.t.size - 1), "iota1_ratio": hist.iota1_ratio(),
              "a0_end": float(hist.a0[-1]), "n_recenter": hist.n_recenter,
              "max_abs_U_imag": float(np.abs(hist.U_imag).max())}
    if skle_path is not None:
        chk = ito_drive_check(skle_path, hist)
        result["ito"] = {"rms_gap": chk["rms_gap"], "max_gap": chk["max_gap"]}
    return ["iota.csv"], result


def run_verify(sc, out: Path, jobs=1):
    from .verify import verify
    suites = sc.get("suites", ["bounds"])
    if isinstance(suites, str):
        suites = [suites]
    reports = [verify(name, quick=bool(sc.get("quick", False)), seed=int(sc.get("seed", 0)), jobs=jobs)
               for name in suites]
    write_json(out / "report.json", {"reports": [{k: v for k, v in r.items() if k != "seconds"} for r in reports]})
    result = {r["suite"]: {"passed": r["passed"], "n_failed": r["n_failed"]} for r in reports}
    return ["report.json"], result, all(r["passed"] for r in reports)


# driver ----------------------------------------------------------------------------

def run_scenario(scenario, out=None, seed=None, jobs: int = 1) -> dict:
    """Run a scenario (path or mapping); write outputs and ``manifest.json``.

    Returns the manifest. ``status`` is "Success", "InvariantFailure" (a
    verify suite failed) or "Error" (the exception is re-raised after the
    manifest is written).
    """
    sc = load_scenario(scenario) if isinstance(scenario, (str, os.PathLike)) else copy.deepcopy(scenario)
    if seed is not None:
        sc["seed"] = int(seed)
    if out is not None:
        sc["out"] = str(out)
    sc = check_scenario(sc)
    out_dir = Path(sc.get("out", "kl-out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {k: v for k, v in sc.items() if k != "out"}
    manifest = {
        "scenario": record,
        "scenario_hash": scenario_hash(record),
        "tool": "kllab",
        "tool_version": __version__,
        "command": sc["command"],
        "seed": sc.get("seed"),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    cmd = sc["command"]
    ok = True
    try:
        if cmd in ("skle", "mc"):
            files, result = (run_skle if cmd == "skle" else run_mc)(sc, out_dir, jobs=jobs)
        elif cmd == "verify":
            files, result, ok = run_verify(sc, out_dir, jobs=jobs)
        else:
            files, result = {"kernel": run_kernel, "evolve": run_evolve, "map": run_map,
                             "transform": run_transform}[cmd](sc, out_dir)
    except KLError as exc:
        manifest.update(status="Error", error=f"{exc.module}: {type(exc).__name__}: {exc}", files=[],
                        finished=time.strftime("%Y-%m-%dT%H:%M:%S%z"))
        write_json(out_dir / "manifest.json", manifest)
        raise
    if sc.get("output") and files:
        os.replace(out_dir / files[0], out_dir / sc["output"])
        files = [sc["output"]] + list(files[1:])
    manifest["result"] = result
    manifest["files"] = [{"path": f, "sha256": sha256_file(out_dir / f), "bytes": (out_dir / f).stat().st_size}
                         for f in files]
    manifest["status"] = "Success" if ok else "InvariantFailure"
    manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    write_json(out_dir / "manifest.json", manifest)
    return manifest


def verify_manifest(path) -> list:
    """Files whose checksum no longer matches; empty when the run is intact."""
    path = Path(path)
    with open(path) as fh:
        man = json.load(fh)
    bad = []
    for f in man.get("files", []):
        p = path.parent / f["path"]
        if not p.exists() or sha256_file(p) != f["sha256"]:
            bad.append(f["path"])
    return bad
