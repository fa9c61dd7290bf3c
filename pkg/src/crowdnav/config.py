"""TOML configuration: sections [scenario], [robot], [controller],
[compliance], [pedestrians], [batch]; every key optional with code defaults.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .contact import ComplianceParams
from .core import PedModelParams, Pose, RobotParams, ScenarioConfig
from .pipeline import GOAL_MARGIN, ControllerMode


@dataclass
class ControllerConfig:
    mode: ControllerMode = ControllerMode.SHARED_RDS
    goal_margin: float = GOAL_MARGIN
    angle_convention: str = "vw"   # agreement angle: atan2(v, w) or atan2(w, v)
    ref_jerk: float | None = None


@dataclass
class BatchConfig:
    controllers: list[ControllerMode] = field(default_factory=lambda: [ControllerMode.SHARED_RDS])
    densities: list[float] = field(default_factory=lambda: [0.08, 0.18, 0.26])
    repetitions: int = 15
    seed: int = 0
    workers: int | None = None


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    robot: RobotParams = field(default_factory=RobotParams)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    compliance: ComplianceParams = field(default_factory=ComplianceParams)
    batch: BatchConfig = field(default_factory=BatchConfig)


def mode_from_name(name: str) -> ControllerMode:
    if name == "shared":
        return ControllerMode.SHARED_RDS
    return ControllerMode(name)


def scenario_kind_from_name(name: str) -> str:
    return {"flow": "flow_1d"}.get(name, name)


def load_config(path: str | Path | None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    with open(path, "rb") as fh:
        data = tomllib.load(fh)

    ped = PedModelParams(**data.get("pedestrians", {}))
    sc = data.get("scenario", {})
    kw = dict(sc)
    if "kind" in kw:
        kw["kind"] = scenario_kind_from_name(kw["kind"])
    if "start" in kw:
        kw["start"] = Pose(*kw["start"])
    if "arena" in kw:
        kw["arena"] = tuple(kw["arena"])
    if "goal" in kw:
        kw["goal"] = tuple(kw["goal"])
    cfg.scenario = ScenarioConfig(ped=ped, **kw)

    cfg.robot = RobotParams(**data.get("robot", {}))

    comp = dict(data.get("compliance", {}))
    if "damping" in comp:
        comp["damping"] = np.asarray(comp["damping"], dtype=float)
    cfg.compliance = ComplianceParams(**comp)

    ctl = dict(data.get("controller", {}))
    if "mode" in ctl:
        ctl["mode"] = mode_from_name(ctl["mode"])
    cfg.controller = ControllerConfig(**ctl)

    bat = dict(data.get("batch", {}))
    if "controllers" in bat:
        bat["controllers"] = [mode_from_name(m) for m in bat["controllers"]]
    cfg.batch = BatchConfig(**bat)

    cfg.scenario.validate()
    cfg.robot.validate()
    cfg.compliance.validate()
    return cfg
