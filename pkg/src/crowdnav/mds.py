"""Obstacle avoidance by modulating a nominal velocity field.

Obstacles are star-shaped level sets of a distance function Gamma that is 1
on the inflated boundary and grows outward.  The nominal field f is reshaped
per obstacle by M = E D E^-1 with E = [n_hat, t_hat] and
D = diag(1 - 1/Gamma, 1 + 1/Gamma), which zeroes boundary-normal motion at
Gamma = 1 while amplifying tangential flow.  Moving obstacles are handled in
their own frame: out = M (f - v_obs) + v_obs.

Multiple obstacles combine by Gamma-based weights w_k ~ prod_{j != k}
(Gamma_j - 1); the closest obstacle dominates and the combination is
order-independent.  Beyond GAMMA_CUT the field is the unmodulated nominal;
eigenvalues relax linearly to identity over [RAMP * GAMMA_CUT, GAMMA_CUT] so
the field stays continuous across the cutoff (the pure eigenvalue formulas
would leave a ~1/GAMMA_CUT jump there).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import RobotParams, Twist

GAMMA_CUT = 10.0
RAMP = 0.8
LAMBDA_T_MAX = 2.0
SENSING_RANGE = 10.0
SAFETY_MARGIN = 0.05


@dataclass
class StarObstacle:
    """Star-shaped obstacle: boundary radius R(phi) about a reference point.

    radius may be a constant (circle) or a callable of the boundary angle phi
    measured in world frame about the reference point.  The effective
    boundary absorbing the robot footprint is R(phi) + margin.
    """

    center: tuple[float, float]
    radius: float | Callable[[float], float]
    velocity: tuple[float, float] = (0.0, 0.0)
    margin: float = 0.0
    reference_point: tuple[float, float] | None = None

    def __post_init__(self):
        if self.reference_point is None:
            self.reference_point = self.center

    def boundary_radius(self, phi: float) -> float:
        r = self.radius(phi) if callable(self.radius) else self.radius
        if r <= 0:
            raise ValueError("obstacle radius must be positive")
        return r + self.margin


@dataclass
class Modulation:
    """Diagnostic decomposition of one obstacle's modulation at a point."""

    gamma: float
    normal: tuple[float, float]
    tangent: tuple[float, float]
    eigen_normal: float
    eigen_tangent: float


def gamma(point: Sequence[float], obs: StarObstacle) -> float:
    """Distance level value: 1 on the inflated boundary, >1 outside."""
    px, py = float(point[0]), float(point[1])
    rx, ry = px - obs.reference_point[0], py - obs.reference_point[1]
    dist = math.hypot(rx, ry)
    if dist < 1e-12:
        raise ValueError("gamma is singular at the obstacle reference point")
    return dist / obs.boundary_radius(math.atan2(ry, rx))


def modulation_basis(point: Sequence[float], obs: StarObstacle, attractor=None, nominal=None) -> Modulation:
    """Normal/tangent frame and eigenvalues of one obstacle at a point.

    Eigenvalues follow the exact formulas (no far-field relaxation).  The
    tangent sign is a pure reporting convention — the modulation matrix is
    t-sign-invariant — resolved toward the attractor, then the nominal,
    then +90 degrees.
    """
    g = gamma(point, obs)
    px, py = float(point[0]), float(point[1])
    if callable(obs.radius):
        nx, ny = _fd_gamma_gradient(px, py, obs)
    else:
        nx, ny = px - obs.reference_point[0], py - obs.reference_point[1]
    nn = math.hypot(nx, ny)
    nx, ny = nx / nn, ny / nn
    tx, ty = -ny, nx
    sign = 0.0
    if attractor is not None:
        ax, ay = attractor[0] - px, attractor[1] - py
        sign = tx * ay - ty * ax
    if sign == 0.0 and nominal is not None:
        sign = tx * float(nominal[1]) - ty * float(nominal[0])
    if sign < 0.0:
        tx, ty = -tx, -ty
    lam_n = max(0.0, 1.0 - 1.0 / g) if g >= 1.0 else 0.0
    lam_t = 1.0 + 1.0 / max(g, 1.0)
    return Modulation(g, (nx, ny), (tx, ty), lam_n, lam_t)


def _fd_gamma_gradient(px: float, py: float, obs: StarObstacle, h: float = 1e-6) -> tuple[float, float]:
    gx = gamma((px + h, py), obs) - gamma((px - h, py), obs)
    gy = gamma((px, py + h), obs) - gamma((px, py - h), obs)
    return gx, gy


def crowd_to_obstacles(crowd, robot: RobotParams, safety_margin: float = SAFETY_MARGIN,
                       sensing_range: float = SENSING_RANGE, origin=None) -> list[StarObstacle]:
    """Wrap crowd agents into circles that absorb the robot footprint.

    Agents beyond sensing_range of origin (default: no range gating when
    origin is None) are dropped; each obstacle carries the agent velocity.
    """
    obstacles = []
    pos = crowd.pos
    vel = crowd.vel
    radii = crowd.radius
    if origin is not None and len(pos):
        keep = np.hypot(pos[:, 0] - origin[0], pos[:, 1] - origin[1]) <= sensing_range
    else:
        keep = np.ones(len(pos), dtype=bool)
    for i in np.flatnonzero(keep):
        obstacles.append(StarObstacle(
            center=(float(pos[i, 0]), float(pos[i, 1])),
            radius=float(radii[i]),
            velocity=(float(vel[i, 0]), float(vel[i, 1])),
            margin=robot.footprint_radius + safety_margin,
        ))
    return obstacles


def modulate_field(points: np.ndarray, nominals: np.ndarray, centers: np.ndarray,
                   radii: np.ndarray, velocities: np.ndarray | None = None,
                   mask: np.ndarray | None = None,
                   gamma_cut: float = GAMMA_CUT, speed_cap_factor: float = LAMBDA_T_MAX
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized circular-obstacle modulation for a batch of instances.

    points, nominals: (B, 2); centers: (B, K, 2); radii: (B, K) effective
    boundary radii (margins already included); velocities: (B, K, 2) rigid
    obstacle translation; mask: (B, K) True where the obstacle slot is real.
    Returns (outputs (B, 2), gammas (B, K)); masked-out slots report inf.
    """
    points = np.asarray(points, dtype=float)
    nominals = np.asarray(nominals, dtype=float)
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    B, K = radii.shape
    if velocities is None:
        velocities = np.zeros((B, K, 2))
    if mask is None:
        mask = np.ones((B, K), dtype=bool)

    rel = points[:, None, :] - centers                      # (B, K, 2)
    dist = np.linalg.norm(rel, axis=2)
    dist = np.maximum(dist, 1e-12)
    gammas = np.where(mask, dist / radii, np.inf)

    out = nominals.copy()
    near = mask & (gammas < gamma_cut)
    rows = np.any(near, axis=1)
    if not np.any(rows):
        return out, gammas

    # Eigenvalues with the far-field relaxation ramp (inside points are
    # treated as on-boundary so the field never drives further in).
    g = gammas[rows]                                        # (b, K)
    m = near[rows]
    ramp_lo = RAMP * gamma_cut
    s = np.where(m, np.clip((gamma_cut - g) / (gamma_cut - ramp_lo), 0.0, 1.0), 0.0)
    inv_g = s / np.maximum(g, 1.0)
    lam_n = np.clip(1.0 - inv_g, 0.0, None)
    lam_t = 1.0 + inv_g

    n_hat = rel[rows] / dist[rows][..., None]               # (b, K, 2)
    f_rel = nominals[rows][:, None, :] - velocities[rows]   # (b, K, 2)
    fn = np.sum(f_rel * n_hat, axis=2)                      # (b, K)
    # M f = lam_n (f.n) n + lam_t (f - (f.n) n)
    mod = lam_t[..., None] * f_rel + (lam_n - lam_t)[..., None] * fn[..., None] * n_hat
    mod = mod + velocities[rows]

    # Gamma-based combination weights: w_k ~ prod_{j != k} (Gamma_j - 1),
    # scaled by the ramp factor so a slot fades out continuously at the cut.
    gm1 = np.where(m, np.maximum(g - 1.0, 0.0), 1.0)
    total = np.prod(gm1, axis=1, keepdims=True)             # (b, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(m & (gm1 > 0), s * total / gm1, 0.0)
    boundary = m & (gm1 <= 0)
    any_boundary = np.any(boundary, axis=1)
    w[any_boundary] = boundary[any_boundary].astype(float)
    wsum = w.sum(axis=1, keepdims=True)
    flat = (wsum[:, 0] <= 0.0)
    if np.any(flat):
        w[flat] = m[flat].astype(float)
        wsum = w.sum(axis=1, keepdims=True)
    w = w / wsum

    combined = np.sum(w[..., None] * mod, axis=1)           # (b, 2)

    cap = speed_cap_factor * np.linalg.norm(nominals[rows], axis=1)
    norm = np.linalg.norm(combined, axis=1)
    over = norm > np.maximum(cap, 1e-15)
    combined[over] *= (cap[over] / norm[over])[:, None]

    out[rows] = combined
    return out, gammas


def modulate(nominal: Twist, point: Sequence[float], obstacles: Sequence[StarObstacle],
             attractor=None, gamma_cut: float = GAMMA_CUT) -> Twist:
    """Modulated velocity at a point outside all obstacles.

    Far field (all Gamma beyond gamma_cut) returns the nominal unchanged;
    output speed is capped at LAMBDA_T_MAX times the nominal speed.
    Non-circular obstacles fall back to a per-obstacle scalar path using the
    finite-difference boundary normal.
    """
    if not obstacles:
        return nominal
    circles = [o for o in obstacles if not callable(o.radius)]
    if len(circles) == len(obstacles):
        K = len(circles)
        centers = np.array([[o.center for o in circles]])
        radii = np.array([[o.boundary_radius(0.0) for o in circles]])
        vels = np.array([[o.velocity for o in circles]])
        pts = np.array([[point[0], point[1]]], dtype=float)
        noms = np.array([[nominal.vx, nominal.vy]])
        out, _ = modulate_field(pts, noms, centers, radii, vels, gamma_cut=gamma_cut)
        return Twist(float(out[0, 0]), float(out[0, 1]))
    return _modulate_scalar(nominal, point, obstacles, attractor, gamma_cut)


def _modulate_scalar(nominal: Twist, point, obstacles, attractor, gamma_cut: float) -> Twist:
    f = np.array([nominal.vx, nominal.vy])
    gs, ss, outs = [], [], []
    for obs in obstacles:
        basis = modulation_basis(point, obs, attractor=attractor, nominal=f)
        g = basis.gamma
        gs.append(g)
        s = min(1.0, max(0.0, (gamma_cut - g) / (gamma_cut - RAMP * gamma_cut)))
        ss.append(s)
        inv_g = s / max(g, 1.0)
        lam_n, lam_t = max(0.0, 1.0 - inv_g), 1.0 + inv_g
        n = np.array(basis.normal)
        v_obs = np.array(obs.velocity)
        f_rel = f - v_obs
        fn = float(f_rel @ n)
        outs.append(lam_t * f_rel + (lam_n - lam_t) * fn * n + v_obs)
    gs = np.array(gs)
    if np.all(gs >= gamma_cut):
        return nominal
    outs = np.array(outs)
    gm1 = np.maximum(gs - 1.0, 0.0)
    if np.any(gm1 <= 0):
        w = (gm1 <= 0).astype(float)
    else:
        total = float(np.prod(gm1))
        w = np.array(ss) * total / gm1
    if w.sum() <= 0:
        w = np.ones_like(w)
    w = w / w.sum()
    combined = (w[:, None] * outs).sum(axis=0)
    cap = LAMBDA_T_MAX * float(np.hypot(*f))
    n = float(np.hypot(*combined))
    if n > cap > 0:
        combined *= cap / n
    return Twist(float(combined[0]), float(combined[1]))
