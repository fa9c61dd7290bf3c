"""Trial orchestration: single runs, parallel batches, and log replay.

Every trial logs one JSONL file.  run_trial also runs (or receives) the
empty-arena twin of its configuration to obtain the free-path time t_free
that normalizes the time-to-goal metric.  Batches run trials in separate
processes with per-trial seeds derived from (base seed, trial index), so a
rerun reproduces every number exactly regardless of scheduling.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__
from .contact import ComplianceParams
from .core import Command, Pose, RobotParams, ScenarioConfig
from .logio import SCHEMA_VERSION, LogWriter, parse_log
from .metrics import GroupComparison, MetricsReport, TrialAccumulator, anova
from .pipeline import GOAL_MARGIN, ControllerMode, Pipeline, attractor_command, goal_reached
from .world import World, spawn_scenario


@dataclass
class TrialOutcome:
    log_path: Path | None
    mode: ControllerMode
    target_density: float
    seed: int
    success: bool
    t_c: float
    t_free: float
    report: MetricsReport


def derive_seed(base: int, index: int) -> int:
    return int(np.random.SeedSequence([base & 0xFFFFFFFFFFFFFFFF, index]).generate_state(1, dtype=np.uint64)[0])


# ----------------------------------------------------------------------
# encoding

def encode_tick(rec, snap) -> dict:
    agents = [
        [int(snap.ids[i]), float(snap.pos[i, 0]), float(snap.pos[i, 1]),
         float(snap.vel[i, 0]), float(snap.vel[i, 1]), float(snap.radius[i]), int(snap.kind[i])]
        for i in range(len(snap))
    ]
    return {
        "type": "tick",
        "t": rec.t,
        "pose": [rec.pose.x, rec.pose.y, rec.pose.theta],
        "uh": [rec.u_h.v, rec.u_h.w],
        "uavoid": [rec.u_avoid.vx, rec.u_avoid.vy],
        "uout": [rec.u_out.v, rec.u_out.w],
        "exec": [rec.executed.v, rec.executed.w],
        "contact": {"in": rec.contact.in_contact, "fc": rec.contact.force,
                    "n": list(rec.contact.normal), "tg": list(rec.contact.tangent)},
        "den": [rec.density_2_5, rec.density_5, rec.density_10],
        "minc": rec.min_clearance if math.isfinite(rec.min_clearance) else None,
        "blocked": rec.blocked,
        "vca": rec.virtual_collision_active,
        "agents": agents,
    }


def encode_event(ev) -> dict:
    return {"t": ev.t, "agent": ev.agent_id, "peak": ev.force_peak,
            "n": list(ev.normal), "dur": ev.duration, "frontal": ev.frontal, "kind": ev.kind}


def json_safe(obj):
    """Replace non-finite floats with null so logs stay standard JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    return obj


def encode_header(config: ScenarioConfig, mode: ControllerMode, robot: RobotParams,
                  compliance: ComplianceParams, goal_margin: float,
                  angle_convention: str, ref_jerk: float | None, dt: float) -> dict:
    return {
        "type": "header",
        "version": SCHEMA_VERSION,
        "software": __version__,
        "mode": mode.value,
        "seed": config.seed,
        "dt": dt,
        "goal_margin": goal_margin,
        "angle_convention": angle_convention,
        "ref_jerk": ref_jerk,
        "scenario": {
            "kind": config.kind,
            "target_density": config.target_density,
            "arena": list(config.arena),
            "start": [config.start.x, config.start.y, config.start.theta],
            "goal": list(config.goal),
            "duration_max": config.duration_max,
        },
        "robot": {
            "footprint_radius": robot.footprint_radius,
            "virtual_boundary_radius": robot.virtual_boundary_radius,
            "control_point_offset": robot.control_point_offset,
            "v_max": robot.v_max, "w_max": robot.w_max,
            "a_max": robot.a_max, "alpha_max": robot.alpha_max,
            "body_mass": robot.body_mass,
        },
        "compliance": {
            "virtual_mass": compliance.virtual_mass,
            "damping": np.asarray(compliance.damping).tolist(),
            "reference_force": compliance.reference_force,
            "sample_time": compliance.sample_time,
            "force_collision_threshold": compliance.force_collision_threshold,
            "lambda_t": compliance.lambda_t,
            "v_max_holonomic": compliance.v_max_holonomic,
        },
        "pedestrians": {
            "desired_speed": config.ped.desired_speed,
            "relaxation_time": config.ped.relaxation_time,
            "repulsion_strength": config.ped.repulsion_strength,
            "repulsion_range": config.ped.repulsion_range,
            "robot_awareness": config.ped.robot_awareness,
            "mass": config.ped.mass,
        },
    }


# ----------------------------------------------------------------------
# single trial

def _simulate(config: ScenarioConfig, mode: ControllerMode, robot: RobotParams,
              compliance: ComplianceParams, goal_margin: float, writer: LogWriter | None,
              empty: bool, pilot, angle_convention: str):
    world = spawn_scenario(config, robot, empty=empty)
    attractor = None if mode.shared else config.goal
    pipe = Pipeline(mode, robot, compliance, attractor=attractor, goal_margin=goal_margin)
    pilot_fn = pilot if pilot is not None else (
        (lambda w: attractor_command(w.pose, config.goal, robot)) if mode.shared else None)
    acc = TrialAccumulator(robot.v_max, robot.w_max, robot.footprint_radius,
                           robot.virtual_boundary_radius, world.dt, mode.shared,
                           angle_convention)
    n_max = int(round(config.duration_max / world.dt))
    success = False
    for _ in range(n_max):
        if mode.shared and pilot_fn is not None:
            pipe.set_external(pilot_fn(world), world.t)
        snap = world.snapshot()
        cmd, rec = pipe.tick(world, snap)
        if writer is not None:
            writer.write(encode_tick(rec, snap))
        acc.consume_record(rec, snap)
        world.step(cmd)
        if goal_reached(world.pose, config.goal, goal_margin):
            success = True
            break
    return success, world.t, acc, world


def run_trial(config: ScenarioConfig, mode: ControllerMode, out_path: str | Path | None,
              robot: RobotParams | None = None, compliance: ComplianceParams | None = None,
              goal_margin: float = GOAL_MARGIN, seed: int | None = None,
              t_free: float | None = None, ref_jerk: float | None = None,
              pilot=None, angle_convention: str = "vw") -> TrialOutcome:
    """Run one crowd trial (plus its free-path twin if t_free is unknown)."""
    mode = ControllerMode(mode)
    robot = (robot or RobotParams()).validate()
    compliance = (compliance or ComplianceParams(v_max_holonomic=robot.v_max)).validate()
    if seed is not None:
        config = replace(config, seed=seed)
    config.validate()

    if t_free is None:
        t_free = free_path_time(config, mode, robot, compliance, goal_margin, pilot, angle_convention)

    writer = LogWriter(out_path) if out_path is not None else None
    dt = None
    try:
        if writer is not None:
            from .world import DT
            writer.write(encode_header(config, mode, robot, compliance, goal_margin,
                                       angle_convention, ref_jerk, DT))
        success, t_c, acc, world = _simulate(config, mode, robot, compliance,
                                             goal_margin, writer, False, pilot, angle_convention)
        events = world.finalized_events()
        report = acc.finalize(success, t_c, t_free, (config.start.x, config.start.y),
                              config.goal, events, ref_jerk, goal_margin)
        if writer is not None:
            writer.write(json_safe({
                "type": "end", "success": success, "t_c": t_c, "t_free": t_free,
                "aborted": False, "events": [encode_event(e) for e in events],
                "report": report.to_dict(),
            }))
    finally:
        if writer is not None:
            writer.close()
    return TrialOutcome(Path(out_path) if out_path else None, mode, config.target_density,
                        config.seed, success, t_c, t_free, report)


def free_path_time(config: ScenarioConfig, mode: ControllerMode, robot: RobotParams,
                   compliance: ComplianceParams, goal_margin: float = GOAL_MARGIN,
                   pilot=None, angle_convention: str = "vw") -> float:
    """Completion time of the empty-arena twin of this configuration."""
    success, t_c, _, _ = _simulate(config, mode, robot, compliance, goal_margin,
                                   None, True, pilot, angle_convention)
    if not success:
        raise RuntimeError("free-path twin did not reach the goal; check the scenario geometry")
    return t_c


# ----------------------------------------------------------------------
# batch

@dataclass
class BatchResult:
    outcomes: list[TrialOutcome]
    by_cell: dict[tuple[str, float], list[TrialOutcome]]
    table_text: str
    comparisons: dict[str, GroupComparison]


def _trial_task(args) -> TrialOutcome:
    (config, mode, out_path, robot, compliance, goal_margin, seed, t_free,
     ref_jerk, angle_convention) = args
    return run_trial(config, mode, out_path, robot, compliance, goal_margin,
                     seed, t_free, ref_jerk, None, angle_convention)


def run_batch(template: ScenarioConfig, modes, densities, repetitions: int,
              out_dir: str | Path, robot: RobotParams | None = None,
              compliance: ComplianceParams | None = None, goal_margin: float = GOAL_MARGIN,
              base_seed: int = 0, ref_jerk: float | None = None,
              workers: int | None = None, angle_convention: str = "vw") -> BatchResult:
    """controllers x densities x repetitions, in parallel, with summary tables."""
    modes = [ControllerMode(m) for m in modes]
    robot = (robot or RobotParams()).validate()
    compliance = (compliance or ComplianceParams(v_max_holonomic=robot.v_max)).validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    t_free_by_mode = {
        mode: free_path_time(template, mode, robot, compliance, goal_margin,
                             angle_convention=angle_convention)
        for mode in set(modes)
    }

    tasks = []
    index = 0
    for mode in modes:
        for density in densities:
            for rep in range(repetitions):
                seed = derive_seed(base_seed, index)
                cfg = replace(template, target_density=density)
                name = f"trial_{mode.value}_d{density:g}_r{rep:03d}.jsonl"
                tasks.append((cfg, mode, out_dir / name, robot, compliance, goal_margin,
                              seed, t_free_by_mode[mode], ref_jerk, angle_convention))
                index += 1

    if workers is None:
        workers = max(1, min(os.cpu_count() or 1, len(tasks)))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_trial_task, tasks, chunksize=1))
    else:
        outcomes = [_trial_task(t) for t in tasks]

    by_cell: dict[tuple[str, float], list[TrialOutcome]] = {}
    for out in outcomes:
        by_cell.setdefault((out.mode.value, out.target_density), []).append(out)

    table = summary_table(by_cell)
    comparisons = standard_comparisons(by_cell, modes, densities)
    text = table + "\n" + comparisons_table(comparisons)
    (out_dir / "summary.txt").write_text(text, encoding="utf-8")
    return BatchResult(outcomes, by_cell, text, comparisons)


METRIC_ROWS = [
    ("Avg. crowd density (2.5m)", lambda r: r.density_avg[0]),
    ("Max crowd density (2.5m)", lambda r: r.density_max[0]),
    ("Avg. crowd density (5m)", lambda r: r.density_avg[1]),
    ("Min distance", lambda r: r.min_distance),
    ("Time to goal (rel.)", lambda r: r.rel_time_to_goal),
    ("Path length (rel.)", lambda r: r.path_length_ratio),
    ("Jerk", lambda r: r.rel_jerk if r.rel_jerk is not None else r.jerk),
    ("Contribution", lambda r: r.contribution),
    ("Avg. fluency", lambda r: r.fluency),
    ("Avg. agreement", lambda r: r.agreement),
    ("Virtual collisions", lambda r: float(r.virtual_collisions)),
    ("Blocked time [s]", lambda r: r.blocked_time),
]

COMPARED_METRICS = {
    "min_distance": lambda r: r.min_distance,
    "rel_time_to_goal": lambda r: r.rel_time_to_goal,
    "path_length_ratio": lambda r: r.path_length_ratio,
    "jerk": lambda r: r.rel_jerk if r.rel_jerk is not None else r.jerk,
    "contribution": lambda r: r.contribution,
    "fluency": lambda r: r.fluency,
    "agreement": lambda r: r.agreement,
    "virtual_collisions": lambda r: float(r.virtual_collisions),
}


def _cell_values(outs, fn) -> list[float]:
    vals = []
    for o in outs:
        v = fn(o.report)
        if v is not None and math.isfinite(v):
            vals.append(float(v))
    return vals


def summary_table(by_cell: dict[tuple[str, float], list[TrialOutcome]]) -> str:
    cells = sorted(by_cell)
    width = 22
    lines = ["Metric".ljust(28) + "".join(f"{m} @{d:g}".ljust(width) for m, d in cells)]
    for label, fn in METRIC_ROWS:
        row = label.ljust(28)
        for cell in cells:
            vals = _cell_values(by_cell[cell], fn)
            row += (f"{np.mean(vals):.2f} ± {np.std(vals):.2f}".ljust(width)
                    if vals else "-".ljust(width))
        lines.append(row)
    row = "Actual collisions".ljust(28)
    for cell in cells:
        outs = by_cell[cell]
        n_coll = sum(1 for o in outs if o.report.actual_collisions > 0)
        row += f"{n_coll}/{len(outs)}".ljust(width)
    lines.append(row)
    row = "Success".ljust(28)
    for cell in cells:
        outs = by_cell[cell]
        row += f"{sum(o.success for o in outs)}/{len(outs)}".ljust(width)
    lines.append(row)
    return "\n".join(lines)


def standard_comparisons(by_cell, modes, densities) -> dict[str, GroupComparison]:
    """One-way ANOVAs across controllers (per metric) and across densities."""
    out: dict[str, GroupComparison] = {}
    mode_names = [m.value for m in dict.fromkeys(modes)]
    if len(mode_names) >= 2:
        for key, fn in COMPARED_METRICS.items():
            groups = {}
            for m in mode_names:
                vals = []
                for (mm, dd), outs in by_cell.items():
                    if mm == m:
                        vals += _cell_values(outs, fn)
                if len(vals) >= 2:
                    groups[m] = vals
            if len(groups) >= 2:
                out[f"controller:{key}"] = anova(groups)
    if len(densities) >= 2:
        for key, fn in COMPARED_METRICS.items():
            groups = {}
            for d in densities:
                vals = []
                for (mm, dd), outs in by_cell.items():
                    if dd == d:
                        vals += _cell_values(outs, fn)
                if len(vals) >= 2:
                    groups[f"{d:g}"] = vals
            if len(groups) >= 2:
                out[f"density:{key}"] = anova(groups)
    return out


def comparisons_table(comparisons: dict[str, GroupComparison]) -> str:
    if not comparisons:
        return ""
    lines = ["", "One-way ANOVA (stars: * p<0.1, ** p<0.05, *** p<0.01)"]
    for name, cmp in sorted(comparisons.items()):
        means = ", ".join(f"{g}={np.mean(v):.3f}" for g, v in cmp.groups.items())
        lines.append(f"  {name:34s} F={cmp.f_statistic:8.3f} p={cmp.p_value:.4f} {cmp.stars:3s} ({means})")
    return "\n".join(lines)


# ----------------------------------------------------------------------
# replay

def accumulate_from_log(log) -> tuple[TrialAccumulator, list]:
    h = log.header
    acc = TrialAccumulator(h["robot"]["v_max"], h["robot"]["w_max"],
                           h["robot"]["footprint_radius"],
                           h["robot"]["virtual_boundary_radius"], h["dt"],
                           ControllerMode(h["mode"]).shared, h["angle_convention"])
    for rec in log.ticks:
        agents = rec["agents"]
        ids = np.array([a[0] for a in agents], dtype=int)
        if len(agents):
            px = np.array([a[1] for a in agents])
            py = np.array([a[2] for a in agents])
            radii = np.array([a[5] for a in agents])
            gaps = np.hypot(px - rec["pose"][0], py - rec["pose"][1]) - radii
        else:
            gaps = np.zeros(0)
        minc = rec["minc"] if rec["minc"] is not None else math.inf
        acc.consume(rec["t"], rec["pose"][:2], rec["uh"], rec["uout"], rec["exec"],
                    rec["den"], minc, rec["blocked"], ids, gaps)
    events = [SimpleNamespace(t=e["t"], agent_id=e["agent"], force_peak=e["peak"],
                              normal=tuple(e["n"]), duration=e["dur"],
                              frontal=e["frontal"], kind=e["kind"])
              for e in (log.trailer or {}).get("events", [])]
    return acc, events


def replay(log_path: str | Path, fig_path: str | Path | None = None,
           ref_jerk: float | None = None) -> tuple[MetricsReport, float]:
    """Recompute metrics from a persisted log; returns (report, max deviation
    from the stored report over comparable numeric fields)."""
    log = parse_log(log_path)
    if log.trailer is None:
        raise ValueError(f"{log_path}: log has no trailer (aborted trial?)")
    acc, events = accumulate_from_log(log)
    h, tr = log.header, log.trailer
    if ref_jerk is None:
        ref_jerk = h.get("ref_jerk")
    report = acc.finalize(tr["success"], tr["t_c"], tr["t_free"],
                          h["scenario"]["start"][:2], h["scenario"]["goal"],
                          events, ref_jerk, h["goal_margin"])
    deviation = report_deviation(report.to_dict(), tr["report"])
    if fig_path is not None:
        render_figure(log, Path(fig_path))
    return report, deviation


def report_deviation(a: dict, b: dict) -> float:
    """Largest relative numeric difference between report a (freshly computed)
    and report b (persisted), compared at the log's 9-significant-digit
    storage precision."""
    from .logio import round_float

    worst = 0.0
    for k, va in a.items():
        vb = b.get(k)
        va, vb = json_safe(va), json_safe(vb)
        pairs = zip(va, vb) if isinstance(va, list) else [(va, vb)]
        for xa, xb in pairs:
            if xa is None or xb is None:
                if xa != xb:
                    worst = math.inf
                continue
            if isinstance(xa, bool) or isinstance(xb, bool):
                if xa != xb:
                    worst = math.inf
                continue
            xa = round_float(float(xa))
            xb = float(xb)
            diff = abs(xa - xb) / max(1.0, abs(xa), abs(xb))
            worst = max(worst, diff)
    return worst


def render_figure(log, fig_path: Path) -> None:
    """Trajectory, agent tracks, and density timeline as a vector figure."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax, axd) = plt.subplots(
        2, 1, figsize=(9, 7), gridspec_kw={"height_ratios": [3, 1]})
    arena = log.header["scenario"]["arena"]
    goal = log.header["scenario"]["goal"]
    stride = max(1, len(log.ticks) // 600)
    ticks = log.ticks[::stride]

    tracks: dict[int, list[tuple[float, float]]] = {}
    for rec in ticks:
        for a in rec["agents"]:
            tracks.setdefault(a[0], []).append((a[1], a[2]))
    for pts in tracks.values():
        xy = np.array(pts)
        ax.plot(xy[:, 0], xy[:, 1], lw=0.4, color="gray", alpha=0.5)
    path = np.array([rec["pose"][:2] for rec in log.ticks])
    ax.plot(path[:, 0], path[:, 1], lw=2.0, color="tab:blue", label="robot")
    ax.plot(*path[0], "go", label="start")
    ax.plot(goal[0], goal[1], "r*", markersize=12, label="goal")
    ax.set_xlim(0, arena[0])
    ax.set_ylim(0, arena[1])
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title(f"{log.header['mode']}  seed={log.header['seed']}")

    t = [rec["t"] for rec in ticks]
    den = np.array([rec["den"] for rec in ticks])
    for i, label in enumerate(["2.5 m", "5 m", "10 m"]):
        axd.plot(t, den[:, i], label=label)
    axd.set_xlabel("t [s]")
    axd.set_ylabel("density [1/m$^2$]")
    axd.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(fig_path, format="svg")
    plt.close(fig)
