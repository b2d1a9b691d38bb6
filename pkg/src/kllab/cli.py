"""``kl`` command line.

Every subcommand builds a scenario from its flags (optionally on top of a
``--scenario`` file) and hands it to :func:`kllab.scenario.run_scenario`.
Exit codes: 0 success, 1 error, 2 an invariant suite failed.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import __version__
from .errors import KLError
from .scenario import load_scenario, run_scenario

log = logging.getLogger("kllab")


def _merge(ctx, base, run_opts, **flags):
    sc = load_scenario(base) if base else {}
    for k, v in flags.items():
        if v is not None:
            sc[k] = v
    g = ctx.obj
    seed = run_opts.get("seed") if run_opts.get("seed") is not None else g["seed"]
    out = run_opts.get("out") or g["out"]
    if run_opts.get("jobs"):
        g["jobs"] = max(1, run_opts["jobs"])
    if seed is not None:
        sc["seed"] = seed
    if out is not None:
        _set_out(sc, out)
    return sc


def _set_out(sc, out):
    """A directory, or a ``.csv`` path naming the main output file (manifest beside it)."""
    p = Path(out)
    if p.suffix.lower() == ".csv":
        sc["out"] = str(p.parent)
        sc["output"] = p.name
    else:
        sc["out"] = str(p)


def _run(ctx, sc, cmd):
    sc.setdefault("command", cmd)
    if sc["command"] != cmd:
        raise click.UsageError(f"scenario command {sc['command']!r} does not match subcommand {cmd!r}")
    man = run_scenario(sc, jobs=ctx.obj["jobs"])
    click.echo(json.dumps({"status": man["status"], "result": man["result"],
                           "files": [f["path"] for f in man["files"]]}, indent=1, default=str))
    if man["status"] == "InvariantFailure":
        ctx.exit(2)
    return man


def _json_file(path):
    with open(path) as fh:
        return json.load(fh)


class _Group(click.Group):
    """Report library errors as one line with the module tag, exit code 1."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except KLError as exc:
            click.echo(f"error [{exc.module}] {type(exc).__name__}: {exc}", err=True)
            ctx.exit(1)


def run_opts(f):
    """--seed/--out/--jobs after the subcommand; they override the global flags."""
    for opt in reversed([
        click.option("--seed", "seed_", type=int, default=None, help="seed for stochastic runs"),
        click.option("--out", "out_", default=None, help="output directory, or a .csv path for the main file"),
        click.option("--jobs", "jobs_", type=int, default=None, help="worker processes"),
    ]):
        f = opt(f)
    return f


def _local(seed_, out_, jobs_):
    return {"seed": seed_, "out": out_, "jobs": jobs_}


scenario_opt = click.option("--scenario", type=click.Path(exists=True, dir_okay=False),
                            help="TOML or JSON scenario; flags override its fields.")
slits_opt = click.option("--slits", type=click.Path(exists=True, dir_okay=False), help="slit configuration JSON")


@click.group(cls=_Group, context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="kl")
@click.option("--seed", type=int, default=None, help="seed for stochastic runs")
@click.option("--jobs", type=int, default=1, show_default=True, help="worker processes")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="output directory")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              default="WARNING", show_default=True)
@click.pass_context
def main(ctx, seed, jobs, out, log_level):
    """Komatu-Loewner chains in standard slit domains."""
    logging.basicConfig(level=log_level.upper(), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    ctx.obj = {"seed": seed, "jobs": max(1, jobs), "out": out}


@main.command()
@scenario_opt
@slits_opt
@click.option("--xi", type=float, default=None, help="boundary point xi0")
@click.option("--grid", default=None, help="nx,ny,xmin,xmax,ymin,ymax, or a .csv path for the grid output")
@click.option("--bmd", is_flag=True, default=None, help="print the BMD constant")
@click.option("--oracle", is_flag=True, default=None, help="also write the lattice oracle grid")
@click.option("--oracle-h", type=float, default=None)
@run_opts
@click.pass_context
def kernel(ctx, scenario, slits, xi, grid, bmd, oracle, oracle_h, seed_, out_, jobs_):
    """Solve for the BMD Poisson kernel and evaluate it."""
    grid_file = None
    if grid is not None and grid.lower().endswith(".csv"):
        grid_file, grid = grid, None
    sc = _merge(ctx, scenario, _local(seed_, out_, jobs_), xi=xi, grid=grid, bmd=bmd, oracle=oracle,
                oracle_h=oracle_h)
    if grid_file and "output" not in sc:
        if "out" in sc:
            sc["output"] = Path(grid_file).name
        else:
            _set_out(sc, grid_file)
    if slits:
        sc["slits"] = _json_file(slits)
    man = _run(ctx, sc, "kernel")
    if bmd:
        click.echo(repr(man["result"]["bmd"]))


@main.command()
@scenario_opt
@slits_opt
@click.option("--driver", type=click.Path(exists=True, dir_okay=False), help="driver JSON")
@click.option("--tmax", type=float, default=None)
@run_opts
@click.pass_context
def evolve(ctx, scenario, slits, driver, tmax, seed_, out_, jobs_):
    """Integrate the slit motion under a deterministic driver."""
    sc = _merge(ctx, scenario, _local(seed_, out_, jobs_), tmax=tmax)
    if slits:
        sc["slits"] = _json_file(slits)
    if driver:
        sc["driver"] = _json_file(driver)
    _run(ctx, sc, "evolve")


@main.command("map")
@scenario_opt
@slits_opt
@click.option("--driver", type=click.Path(exists=True, dir_okay=False))
@click.option("--grid", default=None, help="nx,ny,xmin,xmax,ymin,ymax")
@click.option("--tmax", type=float, default=None)
@run_opts
@click.pass_context
def map_(ctx, scenario, slits, driver, grid, tmax, seed_, out_, jobs_):
    """Flow a grid of points under the chain; writes swallow times."""
    sc = _merge(ctx, scenario, _local(seed_, out_, jobs_), grid=grid, tmax=tmax)
    if slits:
        sc["slits"] = _json_file(slits)
    if driver:
        sc["driver"] = _json_file(driver)
    _run(ctx, sc, "map")


def _stochastic_opts(f):
    for opt in reversed([
        scenario_opt, slits_opt,
        click.option("--xi0", type=float, default=None),
        click.option("--alpha", default=None, help="const:<c> or zero"),
        click.option("--b", "b", default=None, help="bmd:<lambda> or zero"),
        click.option("--tmax", type=float, default=None),
        click.option("--dt", type=float, default=None),
        click.option("--paths", type=int, default=None),
        run_opts,
    ]):
        f = opt(f)
    return f


@main.command()
@_stochastic_opts
@click.pass_context
def skle(ctx, scenario, slits, xi0, alpha, b, tmax, dt, paths, seed_, out_, jobs_):
    """Sample SKLE paths; per-path CSV plus a summary."""
    sc = _merge(ctx, scenario, _local(seed_, out_, jobs_), xi0=xi0, alpha=alpha, b=b, tmax=tmax, dt=dt,
                paths=paths)
    if slits:
        sc["slits"] = _json_file(slits)
    _run(ctx, sc, "skle")


@main.command()
@_stochastic_opts
@click.pass_context
def mc(ctx, scenario, slits, xi0, alpha, b, tmax, dt, paths, seed_, out_, jobs_):
    """Monte Carlo explosion statistics (summary and per-path table only)."""
    sc = _merge(ctx, scenario, _local(seed_, out_, jobs_), xi0=xi0, alpha=alpha, b=b, tmax=tmax, dt=dt,
                paths=paths)
    if slits:
        sc["slits"] = _json_file(slits)
    _run(ctx, sc, "mc")


@main.command()
@scenario_opt
@click.option("--run", "run", type=click.Path(exists=True, dir_okay=False), help="manifest of an evolve/skle run")
@click.option("--points", type=click.Path(exists=True, dir_okay=False), help="JSON list of [re, im]")
@click.option("--path-index", type=int, default=None, help="which path of an skle run")
@click.option("--tmax", type=float, default=None)
@run_opts
@click.pass_context
def transform(ctx, scenario, run, points, path_index, tmax, seed_, out_, jobs_):
    """Map a run to the half-plane: U, iota', iota'', a0."""
    sc = _merge(ctx, scenario, _local(seed_, out_, jobs_), run=run, points_file=points, path_index=path_index,
                tmax=tmax)
    _run(ctx, sc, "transform")


@main.command()
@click.argument("suites", nargs=-1, required=True)
@click.option("--quick", is_flag=True, help="smaller samples")
@run_opts
@click.pass_context
def verify(ctx, suites, quick, seed_, out_, jobs_):
    """Run invariant suites (bounds, oracle, explosion, scaling, capacity, transform, skle, determinism)."""
    sc = _merge(ctx, None, _local(seed_, out_, jobs_), suites=list(suites), quick=quick)
    _run(ctx, sc, "verify")


if __name__ == "__main__":  # pragma: no cover
    main()
