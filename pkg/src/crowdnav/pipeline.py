"""Three-layer reactive control stack.

Layer 1 produces the high-level command: a linear attractor field for
autonomous modes, or the latest human command (with a 0.3 s expiry) for
shared control.  Layer 2 is the selected avoidance method: the modulated
field operates on the holonomic control point and maps back to (v, w), the
velocity-obstacle correction works natively in command space.  Layer 3 is
the compliant contact blend, which owns the motion whenever the bumper
senses force.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import mds, rds
from .contact import ComplianceParams, ContactBlender, ContactState, estimate_contact
from .core import (
    Command,
    Pose,
    RobotParams,
    Twist,
    point_velocity_to_unicycle,
    unicycle_to_point_velocity,
)
from .world import World, density_around

ATTRACTOR_GAIN = 1.0       # 1/s
EXTERNAL_EXPIRY = 0.3      # s
GOAL_MARGIN = 3.0          # m


class ControllerMode(str, Enum):
    MDS = "mds"
    RDS = "rds"
    SHARED_RDS = "shared-rds"
    SHARED_MDS = "shared-mds"

    @property
    def shared(self) -> bool:
        return self in (ControllerMode.SHARED_RDS, ControllerMode.SHARED_MDS)

    @property
    def uses_rds(self) -> bool:
        return self in (ControllerMode.RDS, ControllerMode.SHARED_RDS)


@dataclass
class TickRecord:
    t: float
    pose: Pose
    u_h: Command
    u_avoid: Twist
    u_out: Command
    executed: Command
    contact: ContactState
    density_2_5: float
    density_5: float
    density_10: float
    min_clearance: float
    blocked: bool
    virtual_collision_active: bool


def goal_reached(pose: Pose, goal, margin: float = GOAL_MARGIN) -> bool:
    """True iff the robot is within the (closed) goal margin."""
    if margin <= 0:
        raise ValueError("goal margin must be positive")
    return math.hypot(pose.x - goal[0], pose.y - goal[1]) <= margin


def attractor_command(pose: Pose, goal, robot: RobotParams) -> Command:
    """Linear attractor field at the control point, mapped to a unicycle command."""
    d = robot.control_point_offset
    cp = pose.control_point(d)
    twist = Twist(ATTRACTOR_GAIN * (goal[0] - cp[0]), ATTRACTOR_GAIN * (goal[1] - cp[1]))
    twist = twist.capped(robot.v_max)
    return point_velocity_to_unicycle(pose, twist, d).saturated(robot.v_max, robot.w_max)


class Pipeline:
    """Per-trial controller: one instance per world, stepped once per tick."""

    def __init__(self, mode: ControllerMode, robot: RobotParams,
                 compliance: ComplianceParams | None = None,
                 attractor=None, goal_margin: float = GOAL_MARGIN):
        self.mode = ControllerMode(mode)
        self.robot = robot
        self.compliance = (compliance or ComplianceParams(v_max_holonomic=robot.v_max)).validate()
        self.attractor = attractor
        self.goal_margin = goal_margin
        self.blender = ContactBlender(self.compliance)
        self._external: tuple[Command, float] | None = None
        if not self.mode.shared and attractor is None:
            raise ValueError("autonomous modes require an attractor")

    # -- high level ----------------------------------------------------

    def set_external(self, cmd: Command, t: float) -> None:
        """Latest-wins mailbox for the human command in shared modes."""
        self._external = (cmd, t)

    def high_level_command(self, pose: Pose, t: float) -> Command:
        if self.mode.shared:
            if self._external is None:
                return Command(0.0, 0.0)
            cmd, stamp = self._external
            if t - stamp > EXTERNAL_EXPIRY:
                return Command(0.0, 0.0)
            return cmd.saturated(self.robot.v_max, self.robot.w_max)
        return attractor_command(pose, self.attractor, self.robot)

    # -- full tick -----------------------------------------------------

    def tick(self, world: World, snap=None) -> tuple[Command, TickRecord]:
        pose = world.pose
        r = self.robot
        d = r.control_point_offset
        cp = pose.control_point(d)
        if snap is None:
            snap = world.snapshot()

        u_h = self.high_level_command(pose, world.t)
        blocked = False
        if self.mode.uses_rds:
            constraints = rds.build_constraints(u_h, snap, pose, r)
            result = rds.solve(u_h.saturated(r.v_max, r.w_max), constraints, r)
            blocked = result.blocked
            avoid_twist = unicycle_to_point_velocity(pose, result.command, d)
            avoid_cmd = result.command
        else:
            obstacles = mds.crowd_to_obstacles(snap, r, origin=cp)
            nominal = unicycle_to_point_velocity(pose, u_h, d)
            avoid_twist = mds.modulate(nominal, cp, obstacles, attractor=self.attractor)
            avoid_cmd = None

        contact = estimate_contact(world.active_contacts, cp, avoid_twist)
        executed_twist = unicycle_to_point_velocity(pose, world.exec_cmd, d)
        final_twist = self.blender.update(avoid_twist, contact, executed_twist)

        if contact.in_contact or avoid_cmd is None:
            u_out = point_velocity_to_unicycle(pose, final_twist, d)
        else:
            u_out = avoid_cmd
        u_out = u_out.saturated(r.v_max, r.w_max)

        den25 = density_around(snap, (pose.x, pose.y), 2.5)
        den5 = density_around(snap, (pose.x, pose.y), 5.0)
        den10 = density_around(snap, (pose.x, pose.y), 10.0)
        minc, vca = _clearances(snap, pose, r)

        record = TickRecord(world.t, pose, u_h, avoid_twist, u_out, world.exec_cmd,
                            contact, den25, den5, den10, minc, blocked, vca)
        return u_out, record


def _clearances(snap, pose: Pose, r: RobotParams) -> tuple[float, bool]:
    if len(snap) == 0:
        return math.inf, False
    d = np.hypot(snap.pos[:, 0] - pose.x, snap.pos[:, 1] - pose.y) - snap.radius
    return float(np.min(d) - r.footprint_radius), bool(np.any(d < r.virtual_boundary_radius))
