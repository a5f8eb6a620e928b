from __future__ import annotations

import functools
import json
import logging
from dataclasses import asdict, replace
from pathlib import Path

import click
import pandas as pd

from w2geo.audit import get_logger
from w2geo.config import BarycenterSettings, W2Config
from w2geo.errors import W2GeoError
from w2geo.experiments import EXPERIMENTS, ExperimentReport, run_verify
from w2geo.frechet import frechet_mean, path_variances
from w2geo.geometry import Space
from w2geo.interpolate import convexity_certificate, default_grid, displacement_path, linear_path
from w2geo.report import render_json, render_table, save_report
from w2geo.schema import (
    barycenter_result_to_dict,
    coupling_to_dict,
    ensemble_from_dict,
    frechet_result_to_dict,
    group_from_dict,
    load_json,
    measure_from_dict,
    parse_space_spec,
    to_jsonable,
)
from w2geo.symmetry import cyclic_rotation_group, sandwich_report
from w2geo.transport import coupling_frame, solve_ot
from w2geo.wbarycenter import history_frame, w2_barycenter


_SUITES = ("convexity", "projection", "jensen", "oracle")


def _w2geo_errors(fn):
    """Turn library errors into a one-line ClickException (exit code 1)."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except W2GeoError as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc

    return wrapper


def _emit(ctx: click.Context, payload: dict | list, table: pd.DataFrame | None = None) -> None:
    """Write JSON (or the CSV *table* when --format csv) to --out or stdout."""
    fmt: str = ctx.obj["format"]
    out: Path | None = ctx.obj["out"]
    if fmt == "csv":
        if table is None:
            raise click.UsageError("this command has no CSV output; use --format json")
        text = table.to_csv(index=False)
    else:
        text = json.dumps(to_jsonable(payload), indent=2)
    if out is None:
        click.echo(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
        click.echo(f"Wrote {out}", err=True)


def _record(ctx: click.Context, event: str, **fields) -> None:
    run_log = get_logger(ctx.obj["config"])
    if run_log is not None:
        run_log.log(event, seed=ctx.obj["config"].seed, **fields)


def _finish_reports(ctx: click.Context, reports: list[ExperimentReport]) -> None:
    """Print the assertion table, save/emit reports, exit 1 on any failure."""
    config: W2Config = ctx.obj["config"]
    table = render_table(reports)
    csv_to_stdout = ctx.obj["out"] is None and ctx.obj["format"] == "csv"
    with pd.option_context("display.max_rows", None, "display.width", 200):
        click.echo(table.to_string(index=False), err=csv_to_stdout)

    for r in reports:
        _record(ctx, "experiment", name=r.name, passed=r.passed, runtime=r.runtime)
        if config.report_dir is not None:
            save_report(r, config.report_dir)

    if ctx.obj["out"] is not None or ctx.obj["format"] == "csv":
        payload = json.loads(render_json(reports))
        _emit(ctx, payload, table)

    failed = [r.name for r in reports if not r.passed]
    if failed:
        click.echo(f"FAILED: {', '.join(failed)}", err=True)
        ctx.exit(1)
    click.echo(f"All {len(reports)} experiment(s) passed.", err=True)


@click.group()
@click.option(
    "--config",
    "config_path",
    default=None,
    metavar="PATH",
    help="Path to YAML config file. Uses built-in defaults if omitted.",
)
@click.option(
    "--space",
    "space_spec",
    default=None,
    metavar="SPEC",
    help="Space for inputs without a 'space' key, e.g. sphere:dim=2,circumference=2.",
)
@click.option("--seed", default=None, type=int, help="Seed for experiments. Overrides config file.")
@click.option(
    "--tol",
    default=None,
    type=float,
    help="Convexity tolerance for certificates. Overrides config file.",
)
@click.option(
    "--out",
    default=None,
    type=click.Path(dir_okay=False, path_type=Path),
    help="Write output to this file instead of standard output.",
)
@click.option(
    "--format",
    "fmt",
    default="json",
    type=click.Choice(["json", "csv"]),
    show_default=True,
    help="Output format.",
)
@click.option(
    "--log-file",
    default=None,
    type=click.Path(dir_okay=False, path_type=Path),
    help="Append a JSONL run record here. Overrides config file.",
)
@click.option("--verbose", "-v", is_flag=True, help="Log per-iteration detail.")
@click.pass_context
def main(
    ctx: click.Context,
    config_path: str | None,
    space_spec: str | None,
    seed: int | None,
    tol: float | None,
    out: Path | None,
    fmt: str,
    log_file: Path | None,
    verbose: bool,
) -> None:
    """w2geo: quadratic Wasserstein geometry on curved model spaces."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    ctx.ensure_object(dict)
    try:
        config = W2Config.from_yaml(config_path) if config_path else W2Config()
        if seed is not None:
            config = replace(config, seed=seed)
        if tol is not None:
            config = config.with_tolerance(tol)
    except (OSError, ValueError, TypeError) as exc:
        raise click.ClickException(f"Invalid configuration: {exc}") from exc
    if log_file is not None:
        config.log_file = log_file
    try:
        space = parse_space_spec(space_spec) if space_spec else None
    except (W2GeoError, ValueError) as exc:
        raise click.BadParameter(str(exc), param_hint="--space") from exc
    ctx.obj.update(config=config, space=space, out=out, format=fmt)


def _load_measure(ctx: click.Context, path: str):
    return measure_from_dict(load_json(path), ctx.obj["space"], tol=ctx.obj["config"].tolerances)


@main.command()
@click.argument("mu", type=click.Path(exists=True, dir_okay=False))
@click.argument("nu", type=click.Path(exists=True, dir_okay=False))
@click.option("--plan/--no-plan", default=False, help="Include the transport plan entries.")
@click.pass_context
@_w2geo_errors
def w2(ctx: click.Context, mu: str, nu: str, plan: bool) -> None:
    """Exact quadratic Wasserstein distance between two measures."""
    config: W2Config = ctx.obj["config"]
    coupling = solve_ot(_load_measure(ctx, mu), _load_measure(ctx, nu), config.transport, config.tolerances)
    _emit(ctx, coupling_to_dict(coupling, include_plan=plan), coupling_frame(coupling))
    _record(ctx, "w2", name="w2", detail=f"cost={coupling.cost:.12g}")


@main.command()
@click.argument("mu", type=click.Path(exists=True, dir_okay=False))
@click.argument("nu", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--kind",
    default="displacement",
    type=click.Choice(["displacement", "linear"]),
    show_default=True,
    help="Displacement (geodesic) or linear (mixture) interpolation.",
)
@click.option("--steps", default=11, show_default=True, type=click.IntRange(min=3), help="Grid points in [0, 1].")
@click.option("--variance/--no-variance", default=True, help="Certify convexity of t ↦ var(μₜ).")
@click.pass_context
@_w2geo_errors
def interp(ctx: click.Context, mu: str, nu: str, kind: str, steps: int, variance: bool) -> None:
    """Interpolate between two measures on a uniform time grid."""
    config: W2Config = ctx.obj["config"]
    source, target = _load_measure(ctx, mu), _load_measure(ctx, nu)
    grid = default_grid(steps)
    if kind == "displacement":
        path = displacement_path(
            solve_ot(source, target, config.transport, config.tolerances), grid, tol=config.tolerances
        )
    else:
        path = linear_path(source, target, grid, tol=config.tolerances)
    payload = path.to_dict()
    if variance:
        values = path_variances(path, config.frechet, config.tolerances)
        cert = convexity_certificate(values, grid, tol=config.tolerances.convexity)
        payload["variances"] = values.tolist()
        payload["convexity"] = asdict(cert)
    _emit(ctx, payload, path.to_frame())


@main.command()
@click.argument("measure", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
@_w2geo_errors
def frechet(ctx: click.Context, measure: str) -> None:
    """Fréchet mean and variance of a measure."""
    config: W2Config = ctx.obj["config"]
    result = frechet_mean(_load_measure(ctx, measure), config.frechet, config.tolerances)
    table = pd.DataFrame([{"value": result.value, "method": result.method, "residual": result.residual}])
    _emit(ctx, frechet_result_to_dict(result), table)


@main.command()
@click.argument("ensemble", type=click.Path(exists=True, dir_okay=False))
@click.option("--init", "init_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Initial candidate measure. Defaults to the largest-weight entry.")
@click.option("--max-iter", default=None, type=click.IntRange(min=1), help="Iteration cap.")
@click.option("--stop-tol", "--tol", "stop_tol", default=None, type=float,
              help="Stop when the objective decreases by less than this.")
@click.pass_context
@_w2geo_errors
def barycenter(
    ctx: click.Context,
    ensemble: str,
    init_path: str | None,
    max_iter: int | None,
    stop_tol: float | None,
) -> None:
    """Wasserstein barycenter of an ensemble of measures.

    With --format csv the objective history is written instead of the result.
    """
    config: W2Config = ctx.obj["config"]
    settings = config.barycenter
    try:
        settings = BarycenterSettings(
            max_iter=max_iter if max_iter is not None else settings.max_iter,
            tol=stop_tol if stop_tol is not None else settings.tol,
        )
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc
    config = replace(config, barycenter=settings)

    ens = ensemble_from_dict(load_json(ensemble), ctx.obj["space"], tol=config.tolerances)
    init = measure_from_dict(load_json(init_path), ens.space, tol=config.tolerances) if init_path else None
    result = w2_barycenter(ens, init, config)
    _emit(ctx, barycenter_result_to_dict(result), history_frame(result))
    _record(ctx, "barycenter", name="barycenter", detail=result.stop_reason, objective=result.objective)


@main.command()
@click.argument("measure", type=click.Path(exists=True, dir_okay=False))
@click.option("--group", "group_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Group JSON: generators plus closure bound.")
@click.option("--cyclic", default=None, type=click.IntRange(min=1),
              help="Use the cyclic rotation group of this order instead of --group.")
@click.pass_context
@_w2geo_errors
def symmetry(ctx: click.Context, measure: str, group_path: str | None, cyclic: int | None) -> None:
    """Sandwich var(P^W(μ)) ≤ var(μ) ≤ var(P^L²(μ)) for a finite isometry group."""
    if (group_path is None) == (cyclic is None):
        raise click.UsageError("give exactly one of --group and --cyclic")
    config: W2Config = ctx.obj["config"]
    m = _load_measure(ctx, measure)
    space: Space = m.space
    G = cyclic_rotation_group(space, cyclic) if cyclic else group_from_dict(load_json(group_path), space)
    rep = sandwich_report(G, m, config)
    payload = {"group_order": len(G), **asdict(rep)}
    _emit(ctx, payload, pd.DataFrame([payload]).drop(columns=["warnings"]))


@main.command()
@click.option("--quick", is_flag=True, help="Shrink trial counts for a smoke run.")
@click.pass_context
@_w2geo_errors
def verify(ctx: click.Context, quick: bool) -> None:
    """Run every worked example and property suite."""
    _finish_reports(ctx, run_verify(ctx.obj["config"], quick=quick))


@main.command()
@click.argument("name", type=click.Choice(sorted(EXPERIMENTS)))
@click.option("--trials", default=None, type=click.IntRange(min=1),
              help="Trial count for the property suites.")
@click.pass_context
@_w2geo_errors
def example(ctx: click.Context, name: str, trials: int | None) -> None:
    """Run one named experiment."""
    config: W2Config = ctx.obj["config"]
    kwargs = {}
    if trials is not None:
        if name not in _SUITES:
            raise click.UsageError(f"--trials applies to {', '.join(_SUITES)} only")
        kwargs["trials"] = trials
    report = EXPERIMENTS[name](config, seed=config.seed, **kwargs)
    _finish_reports(ctx, [report])
