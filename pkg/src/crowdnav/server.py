"""Live shared-control sessions over a websocket.

Each connected client gets its own world and pipeline, stepped at the
control rate and paced to wall clock (scaled by the pace factor).  Inbound
`cmd` messages land in a latest-wins mailbox with a 0.3 s expiry; the server
streams `state` at 20 Hz and `metrics` at 1 Hz, then a final `end` with the
full report.  Session logs use the exact offline trial format, so the
metrics/replay tooling consumes them unchanged.
"""

from __future__ import annotations

import asyncio
import itertools
import json
import math
import time
from dataclasses import replace
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from .config import RunConfig
from .core import Command
from .logio import LogWriter
from .metrics import TrialAccumulator
from .pipeline import Pipeline, goal_reached
from .runner import encode_event, encode_header, encode_tick, json_safe
from .world import spawn_scenario

STATE_PERIOD = 0.05    # s of simulated time between state messages (20 Hz)
METRICS_PERIOD = 1.0   # s between metrics messages


def create_app(cfg: RunConfig, out_dir: Path, pace: float = 1.0,
               ui_dir: Path | None = None) -> FastAPI:
    if pace <= 0:
        raise ValueError("pace must be positive")
    if not cfg.controller.mode.shared:
        raise ValueError("serve mode requires a shared-control controller")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    app = FastAPI(title="crowdnav serve")
    counter = itertools.count()

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        session_id = next(counter)
        log_path = out_dir / f"session_{int(time.time())}_{session_id:03d}.jsonl"
        await _run_session(ws, cfg, log_path, pace, session_id)

    if ui_dir is None:
        ui_dir = Path(__file__).resolve().parents[2] / "frontend"
    index = ui_dir / "index.html"
    dist = ui_dir / "dist"
    if index.exists():
        @app.get("/")
        async def root():
            return FileResponse(index)
        if dist.exists():
            app.mount("/dist", StaticFiles(directory=dist), name="dist")
    else:
        @app.get("/")
        async def root_missing():
            return PlainTextResponse("crowdnav serve (web UI not built; connect to /ws)")

    return app


async def _run_session(ws: WebSocket, cfg: RunConfig, log_path: Path, pace: float,
                       session_id: int = 0) -> None:
    mode = cfg.controller.mode
    robot = cfg.robot
    scenario = replace(cfg.scenario, seed=cfg.scenario.seed + session_id)
    world = spawn_scenario(scenario, robot)
    pipe = Pipeline(mode, robot, cfg.compliance, attractor=None,
                    goal_margin=cfg.controller.goal_margin)
    acc = TrialAccumulator(robot.v_max, robot.w_max, robot.footprint_radius,
                           robot.virtual_boundary_radius, world.dt, True,
                           cfg.controller.angle_convention)
    writer = LogWriter(log_path)
    writer.write(encode_header(scenario, mode, robot, cfg.compliance,
                               cfg.controller.goal_margin, cfg.controller.angle_convention,
                               cfg.controller.ref_jerk, world.dt))

    disconnected = asyncio.Event()

    async def receiver():
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    data = json.loads(raw)
                except json.JSONDecodeError:
                    continue
                if data.get("type") == "cmd":
                    try:
                        cmd = Command(float(data["v"]), float(data["w"]))
                    except (KeyError, TypeError, ValueError):
                        continue
                    pipe.set_external(cmd, world.t)
        except WebSocketDisconnect:
            disconnected.set()

    recv_task = asyncio.create_task(receiver())
    success = False
    aborted = False
    state_every = max(1, int(round(STATE_PERIOD / world.dt)))
    metrics_every = max(1, int(round(METRICS_PERIOD / world.dt)))
    n_max = int(round(scenario.duration_max / world.dt))
    tick_wall = world.dt / pace
    next_deadline = time.monotonic()

    try:
        for i in range(n_max):
            if disconnected.is_set():
                aborted = True
                break
            snap = world.snapshot()
            cmd, rec = pipe.tick(world, snap)
            writer.write(encode_tick(rec, snap))
            acc.consume_record(rec, snap)
            world.step(cmd)
            if i % state_every == 0:
                await ws.send_text(json.dumps(json_safe(_state_message(world, rec, scenario, robot))))
            if i % metrics_every == 0 and i > 0:
                msg = {"type": "metrics", "t": world.t}
                msg.update(acc.partial_metrics())
                await ws.send_text(json.dumps(json_safe(msg)))
            if goal_reached(world.pose, scenario.goal, cfg.controller.goal_margin):
                success = True
                break
            next_deadline += tick_wall
            delay = next_deadline - time.monotonic()
            if delay > 0:
                await asyncio.sleep(delay)
    except WebSocketDisconnect:
        aborted = True
    finally:
        recv_task.cancel()
        events = world.finalized_events()
        t_c = world.t
        trailer: dict = {"type": "end", "success": success, "t_c": t_c,
                         "aborted": aborted, "events": [encode_event(e) for e in events]}
        report_dict = None
        try:
            from .runner import free_path_time
            t_free = free_path_time(scenario, mode, robot, cfg.compliance,
                                    cfg.controller.goal_margin,
                                    angle_convention=cfg.controller.angle_convention)
            report = acc.finalize(success, t_c, t_free,
                                  (scenario.start.x, scenario.start.y), scenario.goal,
                                  events, cfg.controller.ref_jerk, cfg.controller.goal_margin)
            report_dict = report.to_dict()
            trailer["t_free"] = t_free
            trailer["report"] = report_dict
        except Exception:
            trailer["t_free"] = None
            trailer["report"] = None
        writer.write(json_safe(trailer))
        writer.close()
        if not aborted:
            try:
                await ws.send_text(json.dumps(json_safe(
                    {"type": "end", "report": report_dict, "success": success,
                     "t_c": t_c, "log": str(log_path)})))
                await ws.close()
            except Exception:
                pass


def _state_message(world, rec, scenario, robot) -> dict:
    snap = world.snapshot()
    return {
        "type": "state",
        "t": world.t,
        "pose": [world.pose.x, world.pose.y, world.pose.theta],
        "exec": [world.exec_cmd.v, world.exec_cmd.w],
        "goal": list(scenario.goal),
        "arena": list(scenario.arena),
        "robot": {"footprint": robot.footprint_radius,
                  "virtual_boundary": robot.virtual_boundary_radius,
                  "v_max": robot.v_max, "w_max": robot.w_max},
        "agents": [[int(snap.ids[i]), float(snap.pos[i, 0]), float(snap.pos[i, 1]),
                    float(snap.vel[i, 0]), float(snap.vel[i, 1]),
                    float(snap.radius[i]), int(snap.kind[i])] for i in range(len(snap))],
        "contact": {"active": rec.contact.in_contact, "force": abs(rec.contact.force)},
        "flags": {"blocked": rec.blocked, "virtual_collision_active": rec.virtual_collision_active},
        "phase": "running",
    }
