"""Deterministic fixed-step world: crowd, robot body, and bumper contacts.

Pedestrians follow a social-force update (relaxation toward a desired
velocity plus exponential repulsion from neighbors, walls, and — for aware
agents — the robot).  The robot is a rate-limited unicycle whose pose is
additionally perturbed by contact forces through the chassis mass.  Bumper
contacts are a spring-damper on footprint overlap; only overlaps inside the
frontal arc produce a force reading for the controller, but every overlap is
recorded as an event.

All randomness funnels through one numpy Generator seeded from the scenario,
so identical (config, seed, command stream) gives bit-identical states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    KIND_NAMES,
    KIND_PEDESTRIAN,
    KIND_STATIC_PROP,
    KIND_TROLLEY,
    AgentState,
    Command,
    PedModelParams,
    Pose,
    RobotParams,
    ScenarioConfig,
    wrap_angle,
)

DT = 0.01
CONTACT_STIFFNESS = 2000.0   # N/m
CONTACT_DAMPING = 50.0       # N.s/m
# the bumper wraps the front half of the hull plus margin: steady sliding
# puts the contact near 90 deg bearing (heading aligns with the slide), and
# a narrower arc would go blind exactly when force control matters most
BUMPER_HALF_ANGLE = math.radians(100.0)
WALL_CLEAR = 0.4             # spawn margin from arena walls
SPEED_CAP_FACTOR = 2.0
ROBOT_BERTH = 0.35           # extra personal space aware pedestrians grant the robot

# behavior modes
STATIC, FLOW, WALKER, TROLLEY = 0, 1, 2, 3


@dataclass
class CrowdSnapshot:
    """Crowd state at one tick, stored as arrays for the hot paths."""

    t: float
    ids: np.ndarray       # (n,) int
    pos: np.ndarray       # (n, 2)
    vel: np.ndarray       # (n, 2)
    radius: np.ndarray    # (n,)
    kind: np.ndarray      # (n,) int codes

    def agents(self) -> list[AgentState]:
        return [
            AgentState(int(self.ids[i]), (float(self.pos[i, 0]), float(self.pos[i, 1])),
                       (float(self.vel[i, 0]), float(self.vel[i, 1])),
                       float(self.radius[i]), KIND_NAMES[int(self.kind[i])])
            for i in range(len(self.ids))
        ]

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class ActiveContact:
    agent_id: int
    penetration: float
    normal: tuple[float, float]   # unit, from robot into the agent
    force: float
    frontal: bool
    point: tuple[float, float]


@dataclass
class ContactEvent:
    t: float
    agent_id: int
    force_peak: float
    normal: tuple[float, float]
    duration: float
    frontal: bool
    kind: int


WALL_FORCE_RANGE = 1.0


def _wall_force(clearance: np.ndarray, p: PedModelParams) -> np.ndarray:
    shifted = np.exp(-np.minimum(clearance, WALL_FORCE_RANGE) / p.repulsion_range)
    floor = math.exp(-WALL_FORCE_RANGE / p.repulsion_range)
    return p.repulsion_strength * (shifted - floor)


def density_around(crowd: CrowdSnapshot, center, radius: float) -> float:
    """Agent centers within the closed ball of given radius, per unit area."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if len(crowd) == 0:
        return 0.0
    d = np.hypot(crowd.pos[:, 0] - center[0], crowd.pos[:, 1] - center[1])
    return float(np.sum(d <= radius)) / (math.pi * radius * radius)


class World:
    """One simulated trial world; single-threaded, stepped at fixed dt."""

    def __init__(self, config: ScenarioConfig, robot: RobotParams | None = None,
                 dt: float = DT, contact_stiffness: float = CONTACT_STIFFNESS,
                 contact_damping: float = CONTACT_DAMPING,
                 bumper_half_angle: float = BUMPER_HALF_ANGLE):
        self.config = config.validate()
        self.robot = (robot or RobotParams()).validate()
        self.dt = dt
        self.k_c = contact_stiffness
        self.c_c = contact_damping
        self.bumper_half_angle = bumper_half_angle

        self.t = 0.0
        self.pose = config.start
        self.exec_cmd = Command(0.0, 0.0)
        self.robot_world_vel = np.zeros(2)

        n = 0
        self.ids = np.zeros(n, dtype=int)
        self.pos = np.zeros((n, 2))
        self.vel = np.zeros((n, 2))
        self.radius = np.zeros(n)
        self.kind = np.zeros(n, dtype=int)
        self.aware = np.zeros(n, dtype=bool)
        self.mode = np.zeros(n, dtype=int)
        self.flow_dir = np.zeros(n)
        self.speed_pref = np.zeros(n)
        self.anchor = np.zeros((n, 2))
        self.waypoint = np.zeros((n, 2))
        self.parent = -np.ones(n, dtype=int)
        self.offset = np.zeros((n, 2))

        self.active_contacts: list[ActiveContact] = []
        self.events: list[ContactEvent] = []
        self._open: dict[int, ContactEvent] = {}
        self.rng = np.random.default_rng([config.seed & 0xFFFFFFFFFFFFFFFF])

    # ------------------------------------------------------------------
    # construction

    def snapshot(self) -> CrowdSnapshot:
        return CrowdSnapshot(self.t, self.ids.copy(), self.pos.copy(), self.vel.copy(),
                             self.radius.copy(), self.kind.copy())

    def add_agents(self, pos, radius, kind, mode, vel=None, flow_dir=None,
                   speed_pref=None, aware=None, parent=None, offset=None):
        pos = np.atleast_2d(np.asarray(pos, dtype=float))
        n_new = len(pos)

        def col(value, default, dtype=float):
            if value is None:
                return np.full(n_new, default, dtype=dtype)
            a = np.atleast_1d(np.asarray(value, dtype=dtype))
            return np.full(n_new, a[0], dtype=dtype) if len(a) == 1 else a

        start = len(self.ids)
        self.ids = np.concatenate([self.ids, np.arange(start, start + n_new)])
        self.pos = np.vstack([self.pos, pos])
        self.vel = np.vstack([self.vel, np.zeros((n_new, 2)) if vel is None else np.atleast_2d(vel)])
        self.radius = np.concatenate([self.radius, col(radius, 0.3)])
        self.kind = np.concatenate([self.kind, col(kind, 0, int)])
        self.mode = np.concatenate([self.mode, col(mode, 0, int)])
        self.flow_dir = np.concatenate([self.flow_dir, col(flow_dir, 0.0)])
        self.speed_pref = np.concatenate([self.speed_pref, col(speed_pref, 0.0)])
        self.anchor = np.vstack([self.anchor, pos])
        self.waypoint = np.vstack([self.waypoint, pos])
        self.aware = np.concatenate([self.aware, col(aware, True, bool)])
        self.parent = np.concatenate([self.parent, col(parent, -1, int)])
        self.offset = np.vstack([self.offset, np.zeros((n_new, 2)) if offset is None else np.atleast_2d(offset)])
        return np.arange(start, start + n_new)

    # ------------------------------------------------------------------
    # stepping

    def step(self, cmd: Command) -> None:
        self.step_robot(cmd, self.dt)
        self.step_pedestrians(self.dt)
        self.detect_contacts()
        self.t = round(self.t / self.dt + 1) * self.dt

    def step_robot(self, cmd: Command, dt: float) -> tuple[Pose, Command]:
        """Rate-limit the command, integrate the unicycle, apply contact pushback."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        r = self.robot
        dv = min(max(cmd.v - self.exec_cmd.v, -r.a_max * dt), r.a_max * dt)
        dw = min(max(cmd.w - self.exec_cmd.w, -r.alpha_max * dt), r.alpha_max * dt)
        self.exec_cmd = Command(self.exec_cmd.v + dv, self.exec_cmd.w + dw).saturated(r.v_max, r.w_max)

        c, s = math.cos(self.pose.theta), math.sin(self.pose.theta)
        x = self.pose.x + self.exec_cmd.v * c * dt
        y = self.pose.y + self.exec_cmd.v * s * dt
        theta = wrap_angle(self.pose.theta + self.exec_cmd.w * dt)

        push = np.zeros(2)
        for contact in self.active_contacts:
            push -= (contact.force / r.body_mass) * dt * np.array(contact.normal)
        x += push[0] * dt
        y += push[1] * dt
        self.robot_world_vel = np.array([self.exec_cmd.v * c, self.exec_cmd.v * s]) + push

        w, h = self.config.arena
        fp = r.footprint_radius
        self.pose = Pose(min(max(x, fp), w - fp), min(max(y, fp), h - fp), theta)
        return self.pose, self.exec_cmd

    def step_pedestrians(self, dt: float) -> None:
        """Social-force update of every non-trolley agent; trolleys follow rigidly."""
        if not 0.0 < dt <= 0.05:
            raise ValueError("pedestrian step requires dt in (0, 0.05]")
        n = len(self.ids)
        if n == 0:
            return
        p = self.config.ped
        pos, vel = self.pos, self.vel

        desired = np.zeros((n, 2))
        flow = self.mode == FLOW
        desired[flow, 0] = self.flow_dir[flow] * self.speed_pref[flow]
        walk = self.mode == WALKER
        if np.any(walk):
            to_wp = self.waypoint[walk] - pos[walk]
            dist = np.maximum(np.linalg.norm(to_wp, axis=1, keepdims=True), 1e-9)
            desired[walk] = to_wp / dist * self.speed_pref[walk, None]
        static = self.mode == STATIC
        if np.any(static):
            back = self.anchor[static] - pos[static]
            desired[static] = np.clip(back, -p.desired_speed, p.desired_speed)

        force = (desired - vel) / p.relaxation_time

        # pairwise exponential repulsion
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(diff, axis=2)
        np.fill_diagonal(dist, np.inf)
        r_sum = self.radius[:, None] + self.radius[None, :]
        mag = p.repulsion_strength * np.exp((r_sum - dist) / p.repulsion_range)
        force += np.sum((mag / dist)[:, :, None] * diff, axis=1)

        # robot repulsion, gated by awareness; aware pedestrians grant the
        # robot personal space beyond its physical footprint
        if np.any(self.aware):
            rp = np.array([self.pose.x, self.pose.y])
            rdiff = pos - rp
            rdist = np.maximum(np.linalg.norm(rdiff, axis=1), 1e-9)
            rmag = p.repulsion_strength * np.exp(
                (self.radius + self.robot.footprint_radius + ROBOT_BERTH - rdist)
                / p.repulsion_range)
            force += np.where(self.aware, rmag / rdist, 0.0)[:, None] * rdiff

        # arena wall repulsion (pedestrians only, compactly supported so the
        # force is exactly zero more than WALL_FORCE_RANGE from a wall)
        w, h = self.config.arena
        ped = self.kind == KIND_PEDESTRIAN
        force[ped, 1] += _wall_force(pos[ped, 1] - self.radius[ped], p)
        force[ped, 1] -= _wall_force(h - pos[ped, 1] - self.radius[ped], p)
        not_flow = ~flow
        pnf = ped & not_flow
        force[pnf, 0] += _wall_force(pos[pnf, 0] - self.radius[pnf], p)
        force[pnf, 0] -= _wall_force(w - pos[pnf, 0] - self.radius[pnf], p)

        # bumper contact impulses push the touched agent
        for contact in self.active_contacts:
            i = int(np.searchsorted(self.ids, contact.agent_id))
            if i < n and self.ids[i] == contact.agent_id and self.kind[i] != KIND_STATIC_PROP:
                vel[i] += (contact.force / p.mass) * dt * np.array(contact.normal)

        movers = (self.mode != TROLLEY) & (self.kind != KIND_STATIC_PROP)
        vel[movers] += force[movers] * dt
        speed = np.linalg.norm(vel, axis=1)
        cap = SPEED_CAP_FACTOR * p.desired_speed
        over = movers & (speed > cap)
        if np.any(over):
            vel[over] *= (cap / speed[over])[:, None]
        pos[movers] += vel[movers] * dt

        # flow agents wrap around in x to keep density stationary
        if np.any(flow):
            pos[flow, 0] = np.mod(pos[flow, 0], w)

        if np.any(walk):
            arrived = np.flatnonzero(walk)[
                np.linalg.norm(self.waypoint[walk] - pos[walk], axis=1) < 0.6]
            for i in arrived:
                self.waypoint[i] = self.rng.uniform(
                    [WALL_CLEAR, WALL_CLEAR], [w - WALL_CLEAR, h - WALL_CLEAR])

        trolleys = np.flatnonzero(self.mode == TROLLEY)
        for i in trolleys:
            j = self.parent[i]
            pos[i] = pos[j] + self.offset[i]
            vel[i] = vel[j]

        # keep pedestrians inside the arena; flow agents wrap in x instead of
        # being clamped at the ends, and props are never repositioned
        px = pnf
        pos[px, 0] = np.clip(pos[px, 0], self.radius[px], w - self.radius[px])
        pos[ped, 1] = np.clip(pos[ped, 1], self.radius[ped], h - self.radius[ped])

    def detect_contacts(self) -> list[ActiveContact]:
        """Spring-damper forces for footprint overlaps; maintains contact events."""
        rp = np.array([self.pose.x, self.pose.y])
        contacts: list[ActiveContact] = []
        if len(self.ids):
            rel = self.pos - rp
            dist = np.maximum(np.linalg.norm(rel, axis=1), 1e-9)
            pen = self.robot.footprint_radius + self.radius - dist
            for i in np.flatnonzero(pen > 0.0):
                u = rel[i] / dist[i]
                rel_vel = self.vel[i] - self.robot_world_vel
                pen_rate = -float(rel[i] @ rel_vel) / dist[i]
                f = max(self.k_c * pen[i] + self.c_c * pen_rate, 0.0)
                ang = abs(wrap_angle(math.atan2(u[1], u[0]) - self.pose.theta))
                point = rp + self.robot.footprint_radius * u
                contacts.append(ActiveContact(
                    int(self.ids[i]), float(pen[i]), (float(u[0]), float(u[1])),
                    f, ang <= self.bumper_half_angle, (float(point[0]), float(point[1]))))
        self.active_contacts = contacts

        seen = set()
        for c in contacts:
            seen.add(c.agent_id)
            ev = self._open.get(c.agent_id)
            if ev is None:
                idx = int(np.searchsorted(self.ids, c.agent_id))
                self._open[c.agent_id] = ContactEvent(
                    self.t, c.agent_id, c.force, c.normal, 0.0, c.frontal, int(self.kind[idx]))
            elif c.force > ev.force_peak:
                ev.force_peak = c.force
                ev.normal = c.normal
                ev.frontal = ev.frontal or c.frontal
        for agent_id in list(self._open):
            if agent_id not in seen:
                ev = self._open.pop(agent_id)
                ev.duration = self.t - ev.t
                self.events.append(ev)
        return contacts

    def finalized_events(self) -> list[ContactEvent]:
        """All events, with still-open contacts closed at the current time."""
        out = list(self.events)
        for ev in self._open.values():
            closed = ContactEvent(ev.t, ev.agent_id, ev.force_peak, ev.normal,
                                  self.t - ev.t, ev.frontal, ev.kind)
            out.append(closed)
        return out


# ----------------------------------------------------------------------
# scenario generation

def spawn_scenario(config: ScenarioConfig, robot: RobotParams | None = None,
                   empty: bool = False, **world_kwargs) -> World:
    """Build the initial world for a scenario, deterministic in the seed.

    Initial placement puts round(target_density * arena_area) agents in the
    arena; sparse mixes static posers with random walkers, flow_1d fills two
    opposing lanes, mixed adds queue clusters and trolleys on top of a flow.
    """
    world = World(config, robot, **world_kwargs)
    if empty:
        return world
    cfg = world.config
    rng = world.rng
    w, h = cfg.arena
    area = w * h
    n = int(round(cfg.target_density * area))
    if n == 0:
        raise ValueError("target density rounds to zero agents in this arena")
    usable = max((w - 2 * WALL_CLEAR) * (h - 2 * WALL_CLEAR), 1e-9)
    if n * 0.5 > usable:
        raise ValueError(f"cannot place {n} agents in a {w}x{h} arena at this density")

    p = cfg.ped
    positions = _scatter(rng, n, w, h, cfg.start, min_sep=0.55)
    radii = rng.uniform(0.25, 0.35, size=n)
    aware = rng.random(n) < p.robot_awareness
    speeds = p.desired_speed * rng.uniform(0.85, 1.15, size=n)

    if cfg.kind == "sparse":
        n_static = int(round(0.4 * n))
        modes = np.array([STATIC] * n_static + [WALKER] * (n - n_static))
        rng.shuffle(modes)
        idx = world.add_agents(positions, radii, KIND_PEDESTRIAN, modes,
                               speed_pref=speeds, aware=aware)
        for i in idx[world.mode[idx] == WALKER]:
            world.waypoint[i] = rng.uniform([WALL_CLEAR, WALL_CLEAR], [w - WALL_CLEAR, h - WALL_CLEAR])
    elif cfg.kind == "flow_1d":
        lanes = np.where(positions[:, 1] < h / 2, 1.0, -1.0)
        vel = np.column_stack([lanes * speeds, np.zeros(n)])
        world.add_agents(positions, radii, KIND_PEDESTRIAN, FLOW, vel=vel,
                         flow_dir=lanes, speed_pref=speeds, aware=aware)
    else:  # mixed
        n_flow = int(round(0.6 * n))
        n_static = int(round(0.25 * n))
        n_walk = n - n_flow - n_static
        order = rng.permutation(n)
        fi, si, wi = order[:n_flow], order[n_flow:n_flow + n_static], order[n_flow + n_static:]
        lanes = np.where(positions[fi, 1] < h / 2, 1.0, -1.0)
        vel = np.column_stack([lanes * speeds[fi], np.zeros(n_flow)])
        flow_idx = world.add_agents(positions[fi], radii[fi], KIND_PEDESTRIAN, FLOW,
                                    vel=vel, flow_dir=lanes, speed_pref=speeds[fi], aware=aware[fi])
        if n_static:
            queue_pos = _queue_clusters(rng, n_static, w, h, cfg.start)
            world.add_agents(queue_pos, radii[si], KIND_PEDESTRIAN, STATIC, aware=aware[si])
        if n_walk:
            wj = world.add_agents(positions[wi], radii[wi], KIND_PEDESTRIAN, WALKER,
                                  speed_pref=speeds[wi], aware=aware[wi])
            for i in wj:
                world.waypoint[i] = rng.uniform([WALL_CLEAR, WALL_CLEAR], [w - WALL_CLEAR, h - WALL_CLEAR])
        n_troll = max(0, int(round(0.05 * n_flow)))
        for k in range(n_troll):
            parent = int(flow_idx[int(rng.integers(0, len(flow_idx)))])
            off = np.array([-0.55 * world.flow_dir[parent], 0.0])
            world.add_agents(world.pos[parent] + off, 0.25, KIND_TROLLEY, TROLLEY,
                             vel=world.vel[parent], parent=parent, offset=off)
    world.detect_contacts()
    return world


def _scatter(rng, n, w, h, start: Pose, min_sep: float, keep_out: float = 3.0,
             max_tries: int = 4000) -> np.ndarray:
    pts: list[np.ndarray] = []
    tries = 0
    while len(pts) < n:
        tries += 1
        if tries > max_tries * max(n, 1):
            raise ValueError("cannot place agents at the requested density")
        q = rng.uniform([WALL_CLEAR, WALL_CLEAR], [w - WALL_CLEAR, h - WALL_CLEAR])
        if (q[0] - start.x) ** 2 + (q[1] - start.y) ** 2 < keep_out ** 2:
            continue
        if pts and np.min(np.linalg.norm(np.array(pts) - q, axis=1)) < min_sep:
            continue
        pts.append(q)
    return np.array(pts)


def _queue_clusters(rng, n, w, h, start: Pose) -> np.ndarray:
    """Static pedestrians arranged in short line formations (people queueing)."""
    out: list[np.ndarray] = []
    while len(out) < n:
        k = min(int(rng.integers(3, 7)), n - len(out))
        for _ in range(40):
            anchor = rng.uniform([WALL_CLEAR + 1, WALL_CLEAR + 0.5], [w - WALL_CLEAR - 1, h - WALL_CLEAR - 0.5])
            if (anchor[0] - start.x) ** 2 + (anchor[1] - start.y) ** 2 >= 2.5 ** 2:
                break
        ang = rng.uniform(0, math.pi)
        step = np.array([math.cos(ang), math.sin(ang)]) * 0.7
        for i in range(k):
            q = anchor + i * step
            q = np.clip(q, [WALL_CLEAR, WALL_CLEAR], [w - WALL_CLEAR, h - WALL_CLEAR])
            out.append(q)
    return np.array(out[:n])
