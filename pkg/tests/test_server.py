import json
import warnings
from pathlib import Path

import pytest
from starlette.testclient import TestClient

from crowdnav.config import RunConfig
from crowdnav.core import Pose, ScenarioConfig
from crowdnav.logio import parse_log
from crowdnav.runner import replay
from crowdnav.server import create_app

warnings.filterwarnings("ignore", category=DeprecationWarning)


def make_app(tmp_path, duration=20.0, goal_x=7.0, pace=300.0, seed=5):
    cfg = RunConfig()
    cfg.scenario = ScenarioConfig(kind="flow_1d", target_density=0.08, arena=(16.0, 8.0),
                                  start=Pose(2.0, 3.0, 0.0), goal=(goal_x, 3.0),
                                  duration_max=duration, seed=seed)
    return create_app(cfg, Path(tmp_path), pace=pace), cfg


def drive_to_goal(client):
    with client.websocket_connect("/ws") as ws:
        while True:
            msg = ws.receive_json()
            if msg["type"] == "state":
                ws.send_text(json.dumps({"type": "cmd", "v": 1.0, "w": 0.0, "t": msg["t"]}))
            elif msg["type"] == "end":
                return msg


def test_session_completes_and_log_is_consumable(tmp_path):
    app, _ = make_app(tmp_path)
    end = drive_to_goal(TestClient(app))
    assert end["success"]
    report, deviation = replay(end["log"])
    assert deviation <= 1e-9
    log = parse_log(end["log"])
    assert log.header["mode"] == "shared-rds"
    assert log.trailer["aborted"] is False


def test_idle_client_commands_expire(tmp_path):
    app, cfg = make_app(tmp_path, duration=3.0, goal_x=14.0)
    client = TestClient(app)
    with client.websocket_connect("/ws") as ws:
        end = None
        while end is None:
            msg = ws.receive_json()
            if msg["type"] == "end":
                end = msg
    # never sent a command: the robot must not have moved appreciably
    log = parse_log(end["log"])
    assert not end["success"]
    x0 = log.ticks[0]["pose"][0]
    x1 = log.ticks[-1]["pose"][0]
    assert abs(x1 - x0) < 0.05
    assert all(t["uh"] == [0.0, 0.0] for t in log.ticks)


def test_expiry_after_burst_of_commands(tmp_path):
    # moderate pace so client-to-server latency stays small in sim time
    app, _ = make_app(tmp_path, duration=4.0, goal_x=14.0, pace=20.0)
    client = TestClient(app)
    with client.websocket_connect("/ws") as ws:
        for _ in range(5):   # burst right at connect, then go silent
            ws.send_text(json.dumps({"type": "cmd", "v": 1.0, "w": 0.0, "t": 0.0}))
        end = None
        while end is None:
            msg = ws.receive_json()
            if msg["type"] == "end":
                end = msg
    log = parse_log(end["log"])
    driven = [t for t in log.ticks if t["uh"] != [0.0, 0.0]]
    assert driven                                   # the burst was applied
    last_drive = max(t["t"] for t in driven)
    assert last_drive < 1.5                         # and expired early on
    late = [t for t in log.ticks if t["t"] > last_drive + 0.05]
    assert late and all(t["uh"] == [0.0, 0.0] for t in late)


def test_two_sessions_are_isolated(tmp_path):
    app, _ = make_app(tmp_path, duration=2.0, goal_x=14.0)
    client = TestClient(app)
    with client.websocket_connect("/ws") as ws1, client.websocket_connect("/ws") as ws2:
        logs = set()
        done = 0
        while done < 2:
            for ws in (ws1, ws2):
                msg = ws.receive_json()
                if msg["type"] == "state":
                    ws.send_text(json.dumps({"type": "cmd", "v": 0.5, "w": 0.0, "t": msg["t"]}))
                elif msg["type"] == "end":
                    logs.add(msg["log"])
                    done += 1
    assert len(logs) == 2
    # different session seeds: different crowds
    a, b = (parse_log(p) for p in sorted(logs))
    assert a.header["seed"] != b.header["seed"]


def test_disconnect_leaves_partial_flagged_log(tmp_path):
    app, _ = make_app(tmp_path, duration=30.0, goal_x=14.0, pace=50.0)
    client = TestClient(app)
    with client.websocket_connect("/ws") as ws:
        for _ in range(3):
            msg = ws.receive_json()
        # abrupt client exit
    logs = sorted(Path(tmp_path).glob("session_*.jsonl"))
    assert logs
    log = parse_log(logs[-1])
    assert log.trailer is not None and log.trailer["aborted"] is True


def test_metrics_messages_stream(tmp_path):
    app, _ = make_app(tmp_path, duration=3.0, goal_x=14.0)
    client = TestClient(app)
    kinds = []
    with client.websocket_connect("/ws") as ws:
        while True:
            msg = ws.receive_json()
            kinds.append(msg["type"])
            if msg["type"] == "end":
                break
    assert kinds.count("metrics") >= 2
    assert kinds.count("state") >= 40


def test_http_root_serves_placeholder_or_ui(tmp_path):
    app, _ = make_app(tmp_path)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = TestClient(app).get("/")
    assert res.status_code == 200


def test_golden_transcript_fixture(tmp_path):
    """Record a golden message transcript (from a successful session, end
    message included) for the frontend protocol conformance tests."""
    app, _ = make_app(tmp_path, duration=20.0, goal_x=7.0, seed=6)
    client = TestClient(app)
    messages = []
    with client.websocket_connect("/ws") as ws:
        while True:
            msg = ws.receive_json()
            messages.append(msg)
            if msg["type"] == "state":
                ws.send_text(json.dumps({"type": "cmd", "v": 1.0, "w": 0.0, "t": msg["t"]}))
            if msg["type"] == "end":
                break
    assert messages[-1]["type"] == "end"
    assert messages[-1]["success"] is True
    assert messages[-1]["report"] is not None
    for m in messages:
        if m["type"] == "state":
            assert set(m) >= {"t", "pose", "exec", "goal", "arena", "robot", "agents", "contact", "flags"}
    fixture = Path(__file__).parent.parent / "frontend" / "tests" / "fixtures" / "transcript.jsonl"
    if fixture.parent.exists():
        keep = messages[:70] + [messages[-1]] if len(messages) > 71 else messages
        fixture.write_text("\n".join(json.dumps(m) for m in keep) + "\n")
