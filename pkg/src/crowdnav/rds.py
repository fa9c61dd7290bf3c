"""Velocity-obstacle correction of the unicycle command.

Each nearby agent whose velocity-obstacle cone (truncated at horizon tau)
contains the nominal relative velocity contributes one half-plane in
normalized (v/v_max, w/w_max) command space, obtained by projecting the
nominal onto the cone boundary and mapping through the control-point
velocity Jacobian.  The corrected command is the exact constrained
projection of the nominal found by enumerating the unconstrained point,
single-constraint projections, and pairwise intersections — no iterative
solver, no tolerance tuning.

The agent discs use the bare footprint radius (no avoidance safety margin),
which is what lets this controller pass tighter than the modulated-field
one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Command, Pose, RobotParams

HORIZON = 2.0
SENSING_RANGE = 10.0
FEAS_EPS = 1e-9


@dataclass(frozen=True)
class HalfPlaneConstraint:
    """Feasible iff normal . u <= offset, u in normalized command space."""

    normal: tuple[float, float]
    offset: float


@dataclass(frozen=True)
class RdsResult:
    command: Command
    corrected: bool
    blocked: bool
    active_constraints: int


def box_constraints() -> list[HalfPlaneConstraint]:
    return [
        HalfPlaneConstraint((1.0, 0.0), 1.0),
        HalfPlaneConstraint((-1.0, 0.0), 1.0),
        HalfPlaneConstraint((0.0, 1.0), 1.0),
        HalfPlaneConstraint((0.0, -1.0), 1.0),
    ]


def _vo_contains(rel_pos: np.ndarray, rel_vel: np.ndarray, rho: float, tau: float) -> bool:
    """True iff rel_vel reaches the Minkowski disc within (0, tau]."""
    vv = float(rel_vel @ rel_vel)
    if vv < 1e-18:
        return float(rel_pos @ rel_pos) <= rho * rho
    t = float(rel_pos @ rel_vel) / vv
    t = min(max(t, 1e-9), tau)
    gap = rel_pos - rel_vel * t
    return float(gap @ gap) <= rho * rho


def _vo_boundary_offset(rel_pos: np.ndarray, rel_vel: np.ndarray, rho: float, tau: float):
    """Project rel_vel (inside the truncated cone) onto the cone boundary.

    Returns (u_boundary, outward_normal) in relative-velocity space.
    """
    dist_sq = float(rel_pos @ rel_pos)
    rho_sq = rho * rho
    if dist_sq <= rho_sq:
        # Already overlapping: forbid further approach along the center line.
        n = rel_pos / math.sqrt(max(dist_sq, 1e-18))
        approach = float(rel_vel @ n)
        u_b = rel_vel - max(approach, 0.0) * n
        return u_b, -n
    w = rel_vel - rel_pos / tau
    w_len_sq = float(w @ w)
    dot1 = float(w @ rel_pos)
    if dot1 < 0.0 and dot1 * dot1 > rho_sq * w_len_sq:
        # Closest exit is through the truncation arc.
        w_len = math.sqrt(w_len_sq)
        unit_w = w / w_len
        u_b = rel_vel + (rho / tau - w_len) * unit_w
        return u_b, unit_w
    # Closest exit is through a cone leg; side chosen by the cross product.
    leg = math.sqrt(dist_sq - rho_sq)
    if rel_pos[0] * w[1] - rel_pos[1] * w[0] >= 0.0:
        direction = np.array([rel_pos[0] * leg - rel_pos[1] * rho,
                              rel_pos[0] * rho + rel_pos[1] * leg]) / dist_sq
    else:
        direction = np.array([rel_pos[0] * leg + rel_pos[1] * rho,
                              -rel_pos[0] * rho + rel_pos[1] * leg]) / dist_sq
    u_b = float(rel_vel @ direction) * direction
    outward = u_b - rel_vel
    n = float(np.linalg.norm(outward))
    if n < 1e-12:
        # Nominal exactly on the leg: outward is the leg's outer perpendicular.
        perp = np.array([-direction[1], direction[0]])
        if float(perp @ rel_pos) > 0.0:
            perp = -perp
        return u_b, perp
    return u_b, outward / n


def build_constraints(nominal: Command, crowd, pose: Pose, robot: RobotParams,
                      tau: float = HORIZON, sensing_range: float = SENSING_RANGE
                      ) -> list[HalfPlaneConstraint]:
    """Half-planes in normalized command space for agents on collision course.

    Agents whose cone the nominal command does not enter within tau generate
    nothing; the four command box bounds are always included.
    """
    if tau <= 0:
        raise ValueError("horizon tau must be positive")
    constraints = box_constraints()
    d = robot.control_point_offset
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    jac = np.array([[c, -d * s], [s, d * c]])
    cp = np.array(pose.control_point(d))
    v_nom = jac @ np.array([nominal.v, nominal.w])

    pos = crowd.pos
    if len(pos) == 0:
        return constraints
    vel = crowd.vel
    radii = crowd.radius
    dist = np.hypot(pos[:, 0] - cp[0], pos[:, 1] - cp[1])
    for i in np.flatnonzero(dist <= sensing_range):
        rel_pos = pos[i] - cp
        rel_vel = v_nom - vel[i]
        rho = float(radii[i]) + robot.footprint_radius
        if not _vo_contains(rel_pos, rel_vel, rho, tau):
            continue
        u_b, n_out = _vo_boundary_offset(rel_pos, rel_vel, rho, tau)
        # Feasible point velocities: n_out . (v_pt - (u_b + v_agent)) >= 0.
        a_cmd = -(n_out @ jac)
        b = -float(n_out @ (u_b + vel[i]))
        a_norm = np.array([a_cmd[0] * robot.v_max, a_cmd[1] * robot.w_max])
        scale = float(np.linalg.norm(a_norm))
        if scale < 1e-12:
            continue
        constraints.append(HalfPlaneConstraint((a_norm[0] / scale, a_norm[1] / scale), b / scale))
    return constraints


def solve(nominal: Command, constraints: list[HalfPlaneConstraint],
          robot: RobotParams) -> RdsResult:
    """Closest feasible command to the nominal, exactly.

    Enumerates the unconstrained optimum, projections onto single
    constraints, and all pairwise constraint intersections; an empty
    feasible set yields blocked = (0, 0).
    """
    normals = np.array([c.normal for c in constraints])
    offsets = np.array([c.offset for c in constraints])
    u0 = np.array([nominal.v / robot.v_max, nominal.w / robot.w_max])

    def feasible(u):
        return np.all(normals @ u <= offsets + FEAS_EPS)

    def finish(u, corrected):
        slack = offsets - normals @ u
        active = int(np.sum(np.abs(slack) <= 1e-6))
        cmd = Command(float(u[0]) * robot.v_max, float(u[1]) * robot.w_max)
        return RdsResult(cmd, corrected, False, active)

    if feasible(u0):
        return finish(u0, False)

    best, best_d2 = None, np.inf
    viol = normals @ u0 - offsets
    for i in np.flatnonzero(viol > 0):
        u = u0 - viol[i] * normals[i]
        if feasible(u):
            d2 = float((u - u0) @ (u - u0))
            if d2 < best_d2 - 1e-15 or (abs(d2 - best_d2) <= 1e-15 and _lex_less(u, best)):
                best, best_d2 = u, d2
    m = len(constraints)
    for i in range(m):
        for j in range(i + 1, m):
            det = normals[i, 0] * normals[j, 1] - normals[i, 1] * normals[j, 0]
            if abs(det) < 1e-12:
                continue
            u = np.array([
                (offsets[i] * normals[j, 1] - offsets[j] * normals[i, 1]) / det,
                (normals[i, 0] * offsets[j] - normals[j, 0] * offsets[i]) / det,
            ])
            if feasible(u):
                d2 = float((u - u0) @ (u - u0))
                if d2 < best_d2 - 1e-15 or (abs(d2 - best_d2) <= 1e-15 and _lex_less(u, best)):
                    best, best_d2 = u, d2
    if best is None:
        return RdsResult(Command(0.0, 0.0), True, True, 0)
    return finish(best, True)


def _lex_less(u, v) -> bool:
    if v is None:
        return True
    return (u[0], u[1]) < (v[0], v[1])
