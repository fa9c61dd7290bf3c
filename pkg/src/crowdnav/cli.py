"""Command-line interface: run | batch | metrics | compare | replay | serve."""

from __future__ import annotations

import glob
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import click

from .config import RunConfig, load_config, mode_from_name, scenario_kind_from_name
from .logio import parse_log
from .metrics import anova
from .pipeline import ControllerMode
from .runner import (
    accumulate_from_log,
    comparisons_table,
    replay as replay_log,
    run_batch,
    run_trial,
)

CONTROLLER_CHOICES = ["mds", "rds", "shared", "shared-rds", "shared-mds"]
SCENARIO_CHOICES = ["sparse", "flow", "flow_1d", "mixed"]


def _load(config_path) -> RunConfig:
    return load_config(config_path)


def _apply_flags(cfg: RunConfig, scenario, controller, density, seed, goal_margin, ref_jerk):
    if scenario is not None:
        cfg.scenario.kind = scenario_kind_from_name(scenario)
    if controller is not None:
        cfg.controller.mode = mode_from_name(controller)
    if density is not None:
        cfg.scenario = replace(cfg.scenario, target_density=density)
    if seed is not None:
        cfg.scenario = replace(cfg.scenario, seed=seed)
    if goal_margin is not None:
        cfg.controller.goal_margin = goal_margin
    if ref_jerk is not None:
        cfg.controller.ref_jerk = ref_jerk
    return cfg


def _print_report(report_dict: dict) -> None:
    click.echo(json.dumps(report_dict, indent=2, default=str))


@click.group()
def main():
    """Crowd-navigation workbench: simulate, evaluate, compare, serve."""


common_flags = [
    click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                 help="TOML configuration file."),
    click.option("--scenario", type=click.Choice(SCENARIO_CHOICES), default=None),
    click.option("--controller", type=click.Choice(CONTROLLER_CHOICES), default=None),
    click.option("--density", type=float, default=None, help="Target crowd density [1/m^2]."),
    click.option("--seed", type=int, default=None),
    click.option("--goal-margin", type=float, default=None, help="Goal margin in meters (default 3)."),
    click.option("--ref-jerk", type=float, default=None, help="Reference jerk for the relative jerk metric."),
]


def with_flags(fn):
    for flag in reversed(common_flags):
        fn = flag(fn)
    return fn


@main.command()
@with_flags
@click.option("--out", type=click.Path(), required=True, help="Output JSONL log path.")
def run(config_path, scenario, controller, density, seed, goal_margin, ref_jerk, out):
    """Run a single trial and print its metrics report."""
    cfg = _apply_flags(_load(config_path), scenario, controller, density, seed, goal_margin, ref_jerk)
    outcome = run_trial(cfg.scenario, cfg.controller.mode, out, cfg.robot, cfg.compliance,
                        cfg.controller.goal_margin, ref_jerk=cfg.controller.ref_jerk,
                        angle_convention=cfg.controller.angle_convention)
    click.echo(f"success={outcome.success} t_c={outcome.t_c:.2f}s t_free={outcome.t_free:.2f}s -> {out}")
    _print_report(outcome.report.to_dict())


@main.command()
@with_flags
@click.option("--out", type=click.Path(), required=True, help="Output directory for logs and summary.")
@click.option("--controllers", type=str, default=None, help="Comma-separated controller list.")
@click.option("--densities", type=str, default=None, help="Comma-separated density list.")
@click.option("--reps", type=int, default=None, help="Repetitions per cell.")
@click.option("--workers", type=int, default=None, help="Parallel worker processes.")
def batch(config_path, scenario, controller, density, seed, goal_margin, ref_jerk, out,
          controllers, densities, reps, workers):
    """Run a controllers x densities x repetitions matrix and summarize."""
    cfg = _apply_flags(_load(config_path), scenario, controller, density, seed, goal_margin, ref_jerk)
    modes = ([mode_from_name(m.strip()) for m in controllers.split(",")]
             if controllers else cfg.batch.controllers)
    dens = ([float(d) for d in densities.split(",")] if densities else cfg.batch.densities)
    if density is not None:
        dens = [density]
    result = run_batch(cfg.scenario, modes, dens, reps or cfg.batch.repetitions, out,
                       cfg.robot, cfg.compliance, cfg.controller.goal_margin,
                       seed if seed is not None else cfg.batch.seed,
                       cfg.controller.ref_jerk, workers or cfg.batch.workers,
                       cfg.controller.angle_convention)
    click.echo(result.table_text)


@main.command()
@click.argument("log", type=click.Path(exists=True))
@click.option("--ref-jerk", type=float, default=None)
def metrics(log, ref_jerk):
    """Recompute the metric battery from a persisted trial log."""
    report, deviation = replay_log(log, None, ref_jerk)
    _print_report(report.to_dict())
    click.echo(f"deviation from stored report: {deviation:.3e}", err=True)


@main.command()
@click.argument("log", type=click.Path(exists=True))
@click.option("--fig", type=click.Path(), default=None, help="Write an SVG trajectory figure.")
@click.option("--ref-jerk", type=float, default=None)
def replay(log, fig, ref_jerk):
    """Verify a log against its stored report, optionally rendering a figure."""
    report, deviation = replay_log(log, fig, ref_jerk)
    ok = deviation <= 1e-9
    click.echo(f"recomputed metrics deviation: {deviation:.3e} ({'OK' if ok else 'MISMATCH'})")
    if fig:
        click.echo(f"figure written to {fig}")
    if not ok:
        sys.exit(1)


@main.command()
@click.argument("groups", nargs=-1, required=True)
@click.option("--metric", "metric_keys", multiple=True,
              help="Metric field(s) to compare; default: a standard set.")
def compare(groups, metric_keys):
    """One-way ANOVA across groups of logs.

    Each GROUP is name=GLOB, e.g. 'mds=runs/trial_mds_*.jsonl'.
    """
    keys = list(metric_keys) or ["min_distance", "rel_time_to_goal", "path_length_ratio",
                                 "jerk", "contribution", "fluency", "agreement",
                                 "virtual_collisions"]
    parsed: dict[str, list[dict]] = {}
    for g in groups:
        if "=" not in g:
            raise click.UsageError(f"group {g!r} is not of the form name=GLOB")
        name, pattern = g.split("=", 1)
        reports = []
        for path in sorted(glob.glob(pattern)):
            log = parse_log(path)
            if log.trailer is not None:
                reports.append(log.trailer["report"])
        if not reports:
            raise click.UsageError(f"group {name!r}: no logs matched {pattern!r}")
        parsed[name] = reports

    comparisons = {}
    for key in keys:
        groups_vals = {}
        for name, reports in parsed.items():
            vals = [float(r[key]) for r in reports
                    if r.get(key) is not None and math.isfinite(float(r[key]))]
            if len(vals) >= 2:
                groups_vals[name] = vals
        if len(groups_vals) >= 2:
            comparisons[key] = anova(groups_vals)
    click.echo(comparisons_table(comparisons) or "not enough data to compare")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--port", type=int, default=8000)
@click.option("--host", type=str, default="127.0.0.1")
@click.option("--out", type=click.Path(), default="serve_logs", help="Directory for session logs.")
@click.option("--pace", type=float, default=1.0, help="Simulation speed factor (1 = real time).")
@click.option("--controller", type=click.Choice(["shared-rds", "shared-mds"]), default="shared-rds")
def serve(config_path, port, host, out, pace, controller):
    """Serve live shared-control sessions over a websocket (plus the web UI)."""
    import uvicorn

    from .server import create_app

    cfg = _load(config_path)
    cfg.controller.mode = mode_from_name(controller)
    app = create_app(cfg, Path(out), pace)
    click.echo(f"serving on ws://{host}:{port}/ws (UI at http://{host}:{port}/)")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
