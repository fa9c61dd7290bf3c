"""Shared domain types, planar geometry, and configuration.

All units are SI; crowd densities are in people per square meter (ppsm).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

TWO_PI = 2.0 * math.pi

KIND_PEDESTRIAN = 0
KIND_TROLLEY = 1
KIND_STATIC_PROP = 2
KIND_NAMES = {KIND_PEDESTRIAN: "pedestrian", KIND_TROLLEY: "trolley", KIND_STATIC_PROP: "static_prop"}
KIND_CODES = {v: k for k, v in KIND_NAMES.items()}

SCENARIO_KINDS = ("sparse", "flow_1d", "mixed")


def wrap_angle(a: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    if not math.isfinite(a):
        raise ValueError(f"angle must be finite, got {a!r}")
    return a + TWO_PI * math.floor((math.pi - a) / TWO_PI)


@dataclass(frozen=True, slots=True)
class Pose:
    """Planar robot configuration; heading stored wrapped to (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("pose coordinates must be finite")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    def control_point(self, d: float) -> tuple[float, float]:
        """World position of the bumper control point d meters ahead of the axle."""
        return (self.x + d * math.cos(self.theta), self.y + d * math.sin(self.theta))


@dataclass(frozen=True, slots=True)
class Twist:
    """World-frame Cartesian velocity of the control point."""

    vx: float
    vy: float

    def norm(self) -> float:
        return math.hypot(self.vx, self.vy)

    def capped(self, v_max: float) -> "Twist":
        n = self.norm()
        if n <= v_max or n == 0.0:
            return self
        s = v_max / n
        return Twist(self.vx * s, self.vy * s)


@dataclass(frozen=True, slots=True)
class Command:
    """Unicycle command: linear speed v and angular rate w."""

    v: float
    w: float

    def saturated(self, v_max: float, w_max: float) -> "Command":
        return Command(min(max(self.v, -v_max), v_max), min(max(self.w, -w_max), w_max))

    def norm(self, v_max: float, w_max: float) -> float:
        """Euclidean norm in normalized command space (v/v_max, w/w_max)."""
        return math.hypot(self.v / v_max, self.w / w_max)


ZERO_COMMAND = Command(0.0, 0.0)
ZERO_TWIST = Twist(0.0, 0.0)


@dataclass(frozen=True, slots=True)
class AgentState:
    id: int
    position: tuple[float, float]
    velocity: tuple[float, float]
    radius: float
    kind: str = "pedestrian"

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("agent radius must be positive")
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown agent kind {self.kind!r}")


@dataclass
class RobotParams:
    """Geometry and actuation limits of the simulated platform.

    The virtual boundary is an accounting shell only; the footprint disc is
    what makes physical contact.  body_mass is the chassis inertia used for
    the plant-side contact pushback (distinct from the contact controller's
    virtual mass).
    """

    footprint_radius: float = 0.45
    virtual_boundary_radius: float = 0.9
    control_point_offset: float = 0.5
    v_max: float = 1.0
    w_max: float = 1.0
    a_max: float = 1.0
    alpha_max: float = 2.0
    body_mass: float = 150.0

    def validate(self) -> "RobotParams":
        if not self.footprint_radius > 0:
            raise ValueError("footprint_radius must be positive")
        if not self.virtual_boundary_radius > self.footprint_radius:
            raise ValueError("virtual_boundary_radius must exceed footprint_radius")
        if not self.control_point_offset > 0:
            raise ValueError("control_point_offset must be positive")
        for name in ("v_max", "w_max", "a_max", "alpha_max", "body_mass"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        return self


@dataclass
class PedModelParams:
    """Social-force pedestrian model constants.

    robot_awareness is the probability that a spawned pedestrian reacts to
    the robot at all; unaware pedestrians walk as if it were not there.
    """

    desired_speed: float = 1.3
    relaxation_time: float = 0.5
    repulsion_strength: float = 5.0
    repulsion_range: float = 0.3
    robot_awareness: float = 0.8
    mass: float = 70.0

    def validate(self) -> "PedModelParams":
        for name in ("desired_speed", "relaxation_time", "repulsion_strength", "repulsion_range", "mass"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.robot_awareness <= 1.0:
            raise ValueError("robot_awareness must lie in [0, 1]")
        return self


@dataclass
class ScenarioConfig:
    """One trial's world setup: crowd kind, density, arena, endpoints, seed."""

    kind: str = "flow_1d"
    target_density: float = 0.18
    arena: tuple[float, float] = (34.0, 8.0)
    start: Pose = field(default_factory=lambda: Pose(3.0, 3.0, 0.0))
    goal: tuple[float, float] = (29.0, 3.0)
    duration_max: float = 90.0
    seed: int = 0
    ped: PedModelParams = field(default_factory=PedModelParams)

    def validate(self) -> "ScenarioConfig":
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if not 0.0 < self.target_density <= 1.2:
            raise ValueError("target_density must lie in (0, 1.2]")
        w, h = self.arena
        if not (w > 0 and h > 0):
            raise ValueError("arena sides must be positive")
        gx, gy = self.goal
        if not (0.0 <= gx <= w and 0.0 <= gy <= h):
            raise ValueError("goal must lie inside the arena")
        if not self.duration_max > 0:
            raise ValueError("duration_max must be positive")
        self.ped.validate()
        return self


def unicycle_to_point_velocity(pose: Pose, cmd: Command, d: float) -> Twist:
    """World velocity of the control point d ahead of the axle under (v, w)."""
    if not d > 0:
        raise ValueError("control point offset d must be positive")
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return Twist(cmd.v * c - d * cmd.w * s, cmd.v * s + d * cmd.w * c)


def point_velocity_to_unicycle(pose: Pose, twist: Twist, d: float) -> Command:
    """Exact inverse of unicycle_to_point_velocity for d > 0."""
    if not d > 0:
        raise ValueError("control point offset d must be positive")
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return Command(c * twist.vx + s * twist.vy, (-s * twist.vx + c * twist.vy) / d)
