#!/usr/bin/env python3
"""
ChoquetRL command line
----------------------
Validation, evaluation, maximization, LQ solving, simulation and
cross-regularizer comparison, driven by flags or a run config file.
"""
from __future__ import annotations

import functools
import json
import logging
import math
import sys
from dataclasses import asdict
from typing import Any, Callable, Mapping

import click
import pandas as pd

from choquetrl import tables
from choquetrl.choquet import phi_quantile
from choquetrl.config import (
    ConfigError,
    RunConfig,
    load_defaults,
    load_environment,
    merge_overrides,
    parse_scalar,
    read_config_file,
    resolve_seed,
    schema_help,
)
from choquetrl.dist import TABLE_TOL, Distribution, available_distributions, distribution_from_spec
from choquetrl.distortion import Distortion, available_distortions, distortion_from_spec, validate
from choquetrl.errors import ChoquetError, WellPosednessError
from choquetrl.lqcontrol import LQModel, check_wellposed, compare_policies, policy, riccati_residuals, solve, value
from choquetrl.mcsim import SimConfig, TransversalityReport, estimate_value
from choquetrl.runlog import log_run, setup_logging
from choquetrl.staticopt import MVConstraint, maximize, oracle_falsify

logger = logging.getLogger("choquetrl.main")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILED = 2

MODEL_KEYS = ("A", "B", "C", "D", "M", "R", "N", "P", "L", "rho", "lambda")


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------
def build_distribution(spec: Mapping[str, Any]) -> Distribution:
    if "file" in spec:
        return tables.read_quantile_table(spec["file"])
    return distribution_from_spec(spec)


def build_distortion(spec: Mapping[str, Any]) -> Distortion:
    params = dict(spec)
    if "file" in params:
        params["nodes"] = tables.read_nodes(params.pop("file"))
        params.setdefault("kind", "piecewise")
    source = params.get("distribution")
    if isinstance(source, Mapping):
        params["distribution"] = build_distribution(source)
    return distortion_from_spec(params)


def distortion_label(spec: Mapping[str, Any]) -> str:
    extras = ",".join(f"{k}={v}" for k, v in spec.items() if k != "kind" and not isinstance(v, (Mapping, list)))
    return f"{spec['kind']}({extras})" if extras else str(spec["kind"])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------
class Outcome:
    def __init__(self, payload: dict[str, Any], frame: pd.DataFrame | None = None, passed: bool = True):
        self.payload = payload
        self.frame = frame
        self.passed = passed


def _validate(cfg: RunConfig, defaults: Mapping[str, Any], progress: bool) -> Outcome:
    report = validate(build_distortion(cfg.distortion), cfg.grid_size)
    return Outcome(report.to_dict(), passed=report.ok)


def _eval(cfg: RunConfig, defaults: Mapping[str, Any], progress: bool) -> Outcome:
    result = phi_quantile(build_distortion(cfg.distortion), build_distribution(cfg.distribution))
    return Outcome(result.to_dict())


def _table_settings(defaults: Mapping[str, Any]) -> tuple[int, float]:
    table = defaults["tables"]
    return int(table["size"]), float(table.get("tol", TABLE_TOL))


def _maximize(cfg: RunConfig, defaults: Mapping[str, Any], progress: bool) -> Outcome:
    d = build_distortion(cfg.distortion)
    try:
        constraint = MVConstraint(float(cfg.constraint["mean"]), float(cfg.constraint["std"]))
    except KeyError as exc:
        raise ConfigError(f"constraint needs {exc.args[0]!r}") from None
    optimum = maximize(d, constraint)
    payload: dict[str, Any] = {"max_value": optimum.max_value, "law": optimum.distribution.kind}
    passed = True
    if cfg.oracle is not None:
        settings = {**defaults["oracle"], **cfg.oracle}
        report = oracle_falsify(
            d,
            constraint,
            int(settings["trials"]),
            int(settings["atoms"]),
            resolve_seed(settings["seed"]),
            workers=int(settings["workers"]),
            candidates=[optimum.distribution],
            progress=progress,
        )
        payload["oracle"] = report.to_dict()
        passed = report.passed
    frame = tables.quantile_frame(optimum.distribution, *_table_settings(defaults))
    return Outcome(payload, frame, passed)


def _model(cfg: RunConfig) -> LQModel:
    return LQModel.from_mapping(cfg.model)


def _solve_lq(cfg: RunConfig, defaults: Mapping[str, Any], progress: bool) -> Outcome:
    model = _model(cfg)
    d = build_distortion(cfg.distortion)
    try:
        sol = solve(model, d)
    except WellPosednessError as exc:
        return Outcome({"wellposed": exc.report.to_dict()}, passed=False)
    payload: dict[str, Any] = {**sol.to_dict(), "residuals": list(riccati_residuals(model, sol))}
    frame = None
    if cfg.xs:
        settings = _table_settings(defaults)
        parts = []
        for x in cfg.xs:
            part = tables.quantile_frame(policy(model, sol, d, x), *settings)
            part.insert(0, "x", x)
            parts.append(part)
        frame = pd.concat(parts, ignore_index=True)
        if len(cfg.xs) == 1:
            frame = frame.drop(columns="x")
        payload["V"] = {str(x): value(sol, x) for x in cfg.xs}
    return Outcome(payload, frame)


def _simulate(cfg: RunConfig, defaults: Mapping[str, Any], progress: bool) -> Outcome:
    model = _model(cfg)
    d = build_distortion(cfg.distortion)
    try:
        sol = solve(model, d)
    except WellPosednessError as exc:
        return Outcome({"wellposed": exc.report.to_dict()}, passed=False)
    settings = {**defaults["sim"], **cfg.sim}
    settings["seed"] = resolve_seed(settings["seed"])
    try:
        sim = SimConfig(**settings)
    except TypeError as exc:
        raise ConfigError(f"bad sim settings: {exc}") from None

    result = estimate_value(model, sol, d, cfg.x0, sim, progress=progress)
    report = TransversalityReport.from_points(result.transversality)
    closed_form = value(sol, cfg.x0)
    gap = result.value_estimate - closed_form
    payload = {
        **result.to_dict(),
        "closed_form": closed_form,
        "z_score": gap / result.std_error if result.std_error > 0.0 else (0.0 if gap == 0.0 else math.copysign(math.inf, gap)),
        "transversality_passed": report.passed,
    }
    return Outcome(payload, tables.checkpoint_frame(result.transversality), report.passed)


def _compare(cfg: RunConfig, defaults: Mapping[str, Any], progress: bool) -> Outcome:
    model = _model(cfg)
    report = check_wellposed(model)
    if not report.passed:
        return Outcome({"wellposed": report.to_dict()}, passed=False)
    entries = [(distortion_label(spec), build_distortion(spec)) for spec in cfg.distortions]
    rows = compare_policies(model, entries, cfg.xs)
    return Outcome({"rows": len(rows)}, tables.compare_frame(rows))


HANDLERS: dict[str, Callable[[RunConfig, Mapping[str, Any], bool], Outcome]] = {
    "validate": _validate,
    "eval": _eval,
    "maximize": _maximize,
    "solve-lq": _solve_lq,
    "simulate": _simulate,
    "compare": _compare,
}


def _emit(cfg: RunConfig, outcome: Outcome) -> None:
    csv_path = cfg.checkpoints_path if cfg.command == "simulate" and cfg.checkpoints_path else cfg.output_path
    if outcome.frame is not None and csv_path:
        tables.write_csv(outcome.frame, csv_path)
        outcome.payload["csv"] = str(csv_path)
    if cfg.output == "csv" and not csv_path:
        if outcome.frame is None:
            raise ConfigError(f"{cfg.command} has no CSV output")
        click.echo(tables.write_csv(outcome.frame), nl=False)
        return
    click.echo(json.dumps(outcome.payload, indent=2, default=str))


def run(cfg: RunConfig, defaults: Mapping[str, Any] | None = None, *, progress: bool = False, history: bool = True) -> int:
    """Execute one command; returns the exit code."""
    defaults = defaults or load_defaults()
    try:
        outcome = HANDLERS[cfg.command](cfg, defaults, progress)
        _emit(cfg, outcome)
    except ConfigError as exc:
        click.echo(f"❌ Error: {exc}", err=True)
        click.echo(schema_help(), err=True)
        return EXIT_USAGE
    except ChoquetError as exc:
        click.echo(f"❌ Error: {exc}", err=True)
        logger.debug("%s failed", cfg.command, exc_info=True)
        return EXIT_USAGE

    code = EXIT_OK if outcome.passed else EXIT_FAILED
    if code == EXIT_FAILED:
        click.echo(f"❌ {cfg.command} check failed", err=True)
    logger.info("%s finished with exit code %d", cfg.command, code, extra={"stage": cfg.command})
    if history and defaults["defaults"].get("log", True):
        log_run(cfg.command, asdict(cfg), outcome.payload, code)
    return code


# ---------------------------------------------------------------------------
# click surface
# ---------------------------------------------------------------------------
def _parse_params(pairs: tuple[str, ...]) -> dict[str, Any]:
    params = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise click.BadParameter(f"expected KEY=VALUE, got {pair!r}", param_hint="--param")
        params[key.strip()] = parse_scalar(raw)
    return params


def config_option(f):
    return click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Run config file (YAML or key = value)")(f)


def output_options(f):
    f = click.option("--output-path", type=click.Path(dir_okay=False), help="Write the CSV table here")(f)
    f = click.option("--output", type=click.Choice(["json", "csv"]), help="What goes to stdout")(f)
    return f


def distortion_options(f):
    f = click.option("--scale", type=float, help="Multiply the distortion by this factor")(f)
    f = click.option("--file", "nodes_file", type=click.Path(dir_okay=False), help="p,h CSV of piecewise-linear nodes")(f)
    f = click.option("--param", "params", multiple=True, help="Distortion parameter as KEY=VALUE")(f)
    f = click.option("--distortion", help="Distortion tag, see `choquetrl info`")(f)
    return f


def model_options(f):
    for key in reversed(MODEL_KEYS):
        name = "lam" if key == "lambda" else key
        f = click.option(f"--{key}", name, type=float, help=f"LQ model parameter {key}")(f)
    return f


def _distortion_override(distortion, params, nodes_file, scale) -> dict[str, Any] | None:
    if distortion is None and nodes_file is None:
        if params or scale is not None:
            raise click.UsageError("--param and --scale need --distortion or --file")
        return None
    spec: dict[str, Any] = {"kind": distortion or "piecewise", **_parse_params(params)}
    if nodes_file:
        spec["file"] = nodes_file
    if scale is not None:
        spec["scale"] = scale
    return spec


def _model_override(values: Mapping[str, Any]) -> dict[str, Any]:
    return {("lambda" if k == "lam" else k): values.get(k) for k in (*MODEL_KEYS[:-1], "lam")}


def _dispatch(ctx: click.Context, command: str, config_path: str | None, overrides: dict[str, Any], distortion: dict | None = None) -> None:
    data: dict[str, Any] = read_config_file(config_path) if config_path else {}
    if isinstance(data.get("model"), dict) and "lam" in data["model"]:
        data["model"]["lambda"] = data["model"].pop("lam")
    if data.get("command", command) != command:
        raise ConfigError(f"config file is for {data['command']!r}, not {command!r}")
    data = merge_overrides(data, {"command": command, **overrides})
    if distortion is not None:
        data["distortion"] = distortion
    cfg = RunConfig.from_mapping(data)
    code = run(cfg, ctx.obj["defaults"], progress=ctx.obj["progress"])
    ctx.exit(code)


def _guarded(fn):
    """Map config and input errors raised before run() to exit code 1."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return fn(*args, **kwargs)
        except ChoquetError as exc:
            click.echo(f"❌ Error: {exc}", err=True)
            if isinstance(exc, ConfigError):
                click.echo(schema_help(), err=True)
            ctx.exit(EXIT_USAGE)

    return wrapper


@click.group()
@click.option("-v", "--verbose", count=True, help="More log output (-vv for debug)")
@click.option("--progress/--no-progress", default=False, help="Show progress bars")
@click.option("--no-log", is_flag=True, help="Skip the operations log and run history")
@click.pass_context
def cli(ctx, verbose, progress, no_log):
    """ChoquetRL - Choquet regularizers for exploratory control"""
    load_environment()
    try:
        defaults = load_defaults()
    except ConfigError as exc:
        click.echo(f"❌ Error: {exc}", err=True)
        ctx.exit(EXIT_USAGE)
    if no_log:
        defaults["defaults"]["log"] = False
    setup_logging(verbose, log_to_file=bool(defaults["defaults"].get("log", True)))
    ctx.obj = {"defaults": defaults, "progress": progress}


@cli.command("validate")
@config_option
@distortion_options
@click.option("--grid-size", type=int, help="Grid for the concavity and sign checks")
@output_options
@click.pass_context
@_guarded
def validate_cmd(ctx, config_path, distortion, params, nodes_file, scale, grid_size, output, output_path):
    """Check h(0) = h(1) = 0, concavity and non-negativity"""
    if grid_size is None and not config_path:
        grid_size = ctx.obj["defaults"]["validate"]["grid_size"]
    overrides = {"grid_size": grid_size, "output": output, "output_path": output_path}
    _dispatch(ctx, "validate", config_path, overrides, _distortion_override(distortion, params, nodes_file, scale))


@cli.command("eval")
@config_option
@distortion_options
@click.option("--distribution", "distribution_json", help='Distribution spec as JSON, e.g. {"kind": "normal", "mu": 0, "var": 1}')
@click.option("--table", "table_file", type=click.Path(dir_okay=False), help="p,q CSV quantile table")
@output_options
@click.pass_context
@_guarded
def eval_cmd(ctx, config_path, distortion, params, nodes_file, scale, distribution_json, table_file, output, output_path):
    """Evaluate Phi_h of a distribution"""
    law = None
    if table_file:
        law = {"kind": "grid", "file": table_file}
    elif distribution_json:
        try:
            law = json.loads(distribution_json)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--distribution is not valid JSON: {exc}") from None
    overrides = {"distribution": law, "output": output, "output_path": output_path}
    _dispatch(ctx, "eval", config_path, overrides, _distortion_override(distortion, params, nodes_file, scale))


@cli.command("maximize")
@config_option
@distortion_options
@click.option("--mean", type=float, help="Constraint mean m")
@click.option("--std", type=float, help="Constraint standard deviation s")
@click.option("--oracle", is_flag=True, help="Also run the random falsification oracle")
@click.option("--trials", type=int, help="Oracle trials")
@click.option("--atoms", type=int, help="Atoms per oracle trial")
@click.option("--seed", type=int, help="Oracle seed")
@click.option("--workers", type=int, help="Oracle worker threads")
@output_options
@click.pass_context
@_guarded
def maximize_cmd(ctx, config_path, distortion, params, nodes_file, scale, mean, std, oracle, trials, atoms, seed, workers, output, output_path):
    """Maximize Phi_h at fixed mean and standard deviation"""
    overrides: dict[str, Any] = {"constraint": {"mean": mean, "std": std}, "output": output, "output_path": output_path}
    if oracle:
        overrides["oracle"] = {"trials": trials, "atoms": atoms, "seed": seed, "workers": workers}
    _dispatch(ctx, "maximize", config_path, overrides, _distortion_override(distortion, params, nodes_file, scale))


@cli.command("solve-lq")
@config_option
@distortion_options
@model_options
@click.option("--x", "xs", help="Comma-separated states for policy tables")
@output_options
@click.pass_context
@_guarded
def solve_lq_cmd(ctx, config_path, distortion, params, nodes_file, scale, xs, output, output_path, **model):
    """Closed-form exploratory LQ solution"""
    overrides = {"model": _model_override(model), "xs": xs, "output": output, "output_path": output_path}
    _dispatch(ctx, "solve-lq", config_path, overrides, _distortion_override(distortion, params, nodes_file, scale))


@cli.command("simulate")
@config_option
@distortion_options
@model_options
@click.option("--x0", type=float, help="Initial state")
@click.option("--dt", type=float, help="Euler step")
@click.option("--horizon", type=float, help="Minimum horizon T")
@click.option("--paths", "n_paths", type=int, help="Number of paths")
@click.option("--seed", type=int, help="Noise seed")
@click.option("--antithetic/--no-antithetic", default=None, help="Antithetic noise pairs")
@click.option("--workers", type=int, help="Worker threads")
@click.option("--regularizer", type=click.Choice(["closed-form", "quadrature"]), help="How the regularizer term is computed")
@click.option("--checkpoints-path", type=click.Path(dir_okay=False), help="Write T,discounted_second_moment here")
@output_options
@click.pass_context
@_guarded
def simulate_cmd(
    ctx, config_path, distortion, params, nodes_file, scale, x0, dt, horizon, n_paths, seed, antithetic, workers,
    regularizer, checkpoints_path, output, output_path, **model,
):
    """Monte Carlo value estimate under the optimal policy"""
    sim = {
        "dt": dt, "horizon": horizon, "n_paths": n_paths, "seed": seed,
        "antithetic": antithetic, "workers": workers, "regularizer": regularizer,
    }
    overrides = {
        "model": _model_override(model),
        "sim": sim,
        "x0": x0,
        "checkpoints_path": checkpoints_path,
        "output": output,
        "output_path": output_path,
    }
    _dispatch(ctx, "simulate", config_path, overrides, _distortion_override(distortion, params, nodes_file, scale))


@cli.command("compare")
@config_option
@click.option("--distortions", help="Comma-separated distortion tags")
@click.option("--model", "model_file", type=click.Path(dir_okay=False), help="File holding the [model] section")
@model_options
@click.option("--x", "xs", help="Comma-separated states")
@output_options
@click.pass_context
@_guarded
def compare_cmd(ctx, config_path, distortions, model_file, xs, output, output_path, **model):
    """Policy moments and values across regularizers"""
    base_model = None
    if model_file:
        loaded = read_config_file(model_file)
        base_model = loaded.get("model", loaded)
    model_values = merge_overrides({"model": base_model or {}}, {"model": _model_override(model)})["model"] or None
    overrides = {"distortions": distortions, "model": model_values, "xs": xs, "output": output, "output_path": output_path}
    _dispatch(ctx, "compare", config_path, overrides)


@cli.command("info")
def info():
    """List distortion and distribution tags"""
    click.echo("\n📐 Distortions:")
    for tag in available_distortions():
        click.echo(f"  • {tag}")
    click.echo("\n📊 Distributions:")
    for tag in available_distributions():
        click.echo(f"  • {tag}")
    click.echo("\nCommands:")
    for name, command in cli.commands.items():
        click.echo(f"  {name:<10}{command.get_short_help_str()}")


def main(argv: list[str] | None = None) -> int:
    """Entry point with the 0/1/2 exit-code contract."""
    try:
        code = cli.main(args=argv, prog_name="choquetrl", standalone_mode=False)
    except click.exceptions.Abort:
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        click.echo(schema_help(), err=True)
        return EXIT_USAGE
    return code if isinstance(code, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
