import json

import numpy as np
import pytest
from click.testing import CliRunner

from kllab.cli import main
from kllab.errors import ConfigInvalid
from kllab.scenario import read_csv, run_scenario, verify_manifest

ONE_SLIT = [{"y": 1.0, "x": -1.0, "xr": 1.0}]


@pytest.fixture
def runner():
    return CliRunner()


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def _files(out):
    man = json.loads((out / "manifest.json").read_text())
    return {f["path"]: (out / f["path"]).read_bytes() for f in man["files"]}


def test_minimal_empty_domain_run(tmp_path, runner):
    sc = _write(tmp_path / "sc.json", {"command": "kernel", "slits": [], "xi": 0.0, "grid": "3,2,-1,1,0.5,1"})
    res = runner.invoke(main, ["--out", str(tmp_path / "o"), "kernel", "--scenario", sc])
    assert res.exit_code == 0, res.output
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["status"] == "Success" and man["result"]["N"] == 0
    header, rows = read_csv(tmp_path / "o" / "grid.csv")
    z = rows[:, 0] + 1j * rows[:, 1]
    assert header == ["re", "im", "psi_re", "psi_im"] and len(rows) == 6
    assert np.allclose(rows[:, 2] + 1j * rows[:, 3], -1 / (np.pi * z), rtol=1e-15)


def test_overlap_reported_with_field(tmp_path, runner):
    bad = [{"y": 1.0, "x": 0.0, "xr": 1.0}, {"y": 1.0, "x": 0.5, "xr": 2.0}]
    sc = _write(tmp_path / "sc.json", {"command": "kernel", "slits": bad})
    res = runner.invoke(main, ["--out", str(tmp_path / "o"), "kernel", "--scenario", sc])
    assert res.exit_code == 1
    assert "ConfigInvalid" in res.output and "OverlapAtEqualHeight" in res.output and "'slits'" in res.output
    with pytest.raises(ConfigInvalid):
        run_scenario({"command": "kernel", "slits": bad}, out=tmp_path / "p")


def test_unknown_field_and_missing_seed(tmp_path):
    with pytest.raises(ConfigInvalid, match="colour"):
        run_scenario({"command": "kernel", "slits": ONE_SLIT, "colour": "red"}, out=tmp_path)
    with pytest.raises(ConfigInvalid, match="seed"):
        run_scenario({"command": "skle", "slits": ONE_SLIT, "tmax": 0.1}, out=tmp_path)


def test_stochastic_rerun_is_byte_identical(tmp_path, runner):
    args = ["skle", "--slits", _write(tmp_path / "s.json", ONE_SLIT), "--tmax", "0.2", "--dt", "0.02",
            "--paths", "2"]
    for name in ("a", "b"):
        res = runner.invoke(main, ["--seed", "5", "--out", str(tmp_path / name)] + args)
        assert res.exit_code == 0, res.output
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert set(a) == {"path_0000.csv", "path_0001.csv", "paths.csv", "summary.json"}
    assert a == b
    res = runner.invoke(main, ["--seed", "6", "--out", str(tmp_path / "c")] + args)
    assert _files(tmp_path / "c")["path_0000.csv"] != a["path_0000.csv"]


def test_evolve_csv_round_trip_and_checksums(tmp_path, runner):
    sc = {"command": "evolve", "slits": ONE_SLIT, "driver": {"type": "expr", "expr": "0.3*sin(2*t)"}, "tmax": 0.1}
    man = run_scenario(sc, out=tmp_path)
    header, rows = read_csv(tmp_path / "traj.csv")
    assert header == ["t", "y_1", "x_1", "xr_1", "xi", "R"]
    assert rows[0, 1:4].tolist() == [1.0, -1.0, 1.0] and rows[-1, 0] == 0.1
    # the 17-digit text reproduces the values written
    again = tmp_path / "again.csv"
    np.savetxt(again, rows, delimiter=",", fmt="%.17g")
    assert np.array_equal(np.loadtxt(again, delimiter=","), rows)
    assert man["files"][0]["path"] == "traj.csv"
    assert verify_manifest(tmp_path / "manifest.json") == []
    with open(tmp_path / "traj.csv", "a") as fh:
        fh.write("\n")
    assert verify_manifest(tmp_path / "manifest.json") == ["traj.csv"]


def test_toml_and_json_scenarios_agree(tmp_path):
    js = {"command": "evolve", "slits": ONE_SLIT, "driver": {"type": "const", "value": 0.1}, "tmax": 0.05,
          "tolerances": {"rtol": 1e-9}}
    toml = """command = "evolve"
tmax = 0.05
slits = [{y = 1.0, x = -1.0, xr = 1.0}]
driver = {type = "const", value = 0.1}

[tolerances]
rtol = 1e-9
"""
    (tmp_path / "a.toml").write_text(toml)
    _write(tmp_path / "a.json", js)
    ma = run_scenario(str(tmp_path / "a.toml"), out=tmp_path / "t")
    mb = run_scenario(str(tmp_path / "a.json"), out=tmp_path / "j")
    assert ma["scenario_hash"] == mb["scenario_hash"]
    assert _files(tmp_path / "t") == _files(tmp_path / "j")


def test_bad_toml_reports_line(tmp_path, runner):
    p = tmp_path / "bad.toml"
    p.write_text('command = "kernel"\nslits = [\n')
    res = runner.invoke(main, ["kernel", "--scenario", str(p)])
    assert res.exit_code == 1 and "ConfigInvalid" in res.output and "line" in res.output


def test_unknown_suite(tmp_path, runner):
    res = runner.invoke(main, ["--out", str(tmp_path), "verify", "nonsense"])
    assert res.exit_code == 1
    assert "UnknownSuite" in res.output and "nonsense" in res.output


def test_invariant_failure_exit_code(tmp_path, runner):
    # the printed endpoint bound is violated, so the bounds suite fails
    res = runner.invoke(main, ["--out", str(tmp_path), "verify", "bounds", "--quick"])
    assert res.exit_code == 2, res.output
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["status"] == "InvariantFailure"
    report = json.loads((tmp_path / "report.json").read_text())["reports"][0]
    failed = {c["name"] for c in report["checks"] if not c["passed"]}
    assert failed and all(n.startswith("endpoint_bound_r=") for n in failed)


def test_passing_suite_exit_zero(tmp_path, runner):
    res = runner.invoke(main, ["--out", str(tmp_path), "verify", "scaling"])
    assert res.exit_code == 0, res.output


def test_transform_of_evolve_run(tmp_path, runner):
    sc = {"command": "evolve", "slits": ONE_SLIT, "driver": {"type": "expr", "expr": "0.3*sin(3*t)"}, "tmax": 0.05}
    run_scenario(sc, out=tmp_path / "ev")
    pts = _write(tmp_path / "p.json", [[2.0, 2.0]])
    res = runner.invoke(main, ["--out", str(tmp_path / "tr"), "transform", "--run",
                               str(tmp_path / "ev" / "manifest.json"), "--points", pts])
    assert res.exit_code == 0, res.output
    header, rows = read_csv(tmp_path / "tr" / "iota.csv")
    assert header[:5] == ["t", "U", "iota1", "iota2", "a0"] and rows[-1, 0] == pytest.approx(0.05)


def test_map_writes_swallow_times(tmp_path):
    sc = {"command": "map", "slits": [], "driver": 0.0, "tmax": 0.3, "points": [[0.0, 1.0], [1.0, 1.0]]}
    run_scenario(sc, out=tmp_path)
    lines = (tmp_path / "hull.csv").read_text().splitlines()
    assert lines[0] == "z_re,z_im,swallow_time,g_re,g_im"
    first = lines[1].split(",")
    assert float(first[2]) == pytest.approx(0.25, abs=1e-3) and lines[2].split(",")[2] == ""


def test_error_manifest_written(tmp_path):
    run_scenario({"command": "skle", "slits": ONE_SLIT, "tmax": 0.04, "dt": 0.02, "seed": 1}, out=tmp_path / "s")
    with pytest.raises(ConfigInvalid, match="path_index"):
        run_scenario({"command": "transform", "run": str(tmp_path / "s" / "manifest.json"), "path_index": 3},
                     out=tmp_path / "t")
    man = json.loads((tmp_path / "t" / "manifest.json").read_text())
    assert man["status"] == "Error" and "path_index" in man["error"] and man["files"] == []


def test_version(runner):
    res = runner.invoke(main, ["--version"])
    assert res.exit_code == 0 and "0.1.0" in res.output


def test_documented_invocations(tmp_path, runner, monkeypatch):
    monkeypatch.chdir(tmp_path)
    _write(tmp_path / "cfg.json", ONE_SLIT)
    _write(tmp_path / "driver.json", {"type": "expr", "expr": "0.3*sin(2*t)"})
    res = runner.invoke(main, ["kernel", "--slits", "cfg.json", "--xi", "0.0", "--grid", "k/out.csv", "--bmd"])
    assert res.exit_code == 0, res.output
    assert read_csv(tmp_path / "k" / "out.csv")[0] == ["re", "im", "psi_re", "psi_im"]
    assert (tmp_path / "k" / "manifest.json").exists()
    res = runner.invoke(main, ["evolve", "--slits", "cfg.json", "--driver", "driver.json", "--tmax", "0.05",
                               "--out", "e/traj.csv"])
    assert res.exit_code == 0, res.output
    assert json.loads((tmp_path / "e" / "manifest.json").read_text())["files"][0]["path"] == "traj.csv"
    res = runner.invoke(main, ["skle", "--slits", "cfg.json", "--alpha", "const:2.449", "--b", "bmd:-1",
                               "--tmax", "0.04", "--dt", "0.02", "--paths", "2", "--seed", "42", "--out", "runs/"])
    assert res.exit_code == 0, res.output
    summary = json.loads((tmp_path / "runs" / "summary.json").read_text())
    assert {"p_hat", "ci95", "zeta_quantiles"} <= set(summary)
    assert json.loads((tmp_path / "runs" / "manifest.json").read_text())["seed"] == 42
    res = runner.invoke(main, ["transform", "--run", "e/manifest.json", "--out", "t/iota.csv"])
    assert res.exit_code == 0, res.output
    assert read_csv(tmp_path / "t" / "iota.csv")[0] == ["t", "U", "iota1", "iota2", "a0"]
