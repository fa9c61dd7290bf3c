import math

import numpy as np
import pytest

from crowdnav.core import RobotParams, Twist
from crowdnav.mds import (
    GAMMA_CUT,
    StarObstacle,
    crowd_to_obstacles,
    gamma,
    modulate,
    modulate_field,
    modulation_basis,
)
from crowdnav.world import CrowdSnapshot


def snapshot(positions, velocities=None, radii=None):
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    n = len(positions)
    velocities = np.zeros((n, 2)) if velocities is None else np.atleast_2d(velocities)
    radii = np.full(n, 0.3) if radii is None else np.asarray(radii, dtype=float)
    return CrowdSnapshot(0.0, np.arange(n), positions, velocities, radii, np.zeros(n, dtype=int))


# ----------------------------------------------------------------- gamma

def test_gamma_circle_levels():
    obs = StarObstacle(center=(0.0, 0.0), radius=1.0)
    assert gamma((1.0, 0.0), obs) == 1.0
    assert gamma((2.0, 0.0), obs) == 2.0
    assert gamma((0.5, 0.0), obs) == 0.5


def test_gamma_includes_margin():
    obs = StarObstacle(center=(0.0, 0.0), radius=0.5, margin=0.5)
    assert gamma((1.0, 0.0), obs) == 1.0


def test_gamma_singular_at_reference():
    obs = StarObstacle(center=(0.0, 0.0), radius=1.0)
    with pytest.raises(ValueError):
        gamma((0.0, 0.0), obs)


def test_gamma_star_shape_callable():
    # ellipse-like radius function: R(0) = 2, R(pi/2) = 1
    r = lambda phi: 2.0 / math.sqrt(1 + 3 * math.sin(phi) ** 2)
    obs = StarObstacle(center=(0.0, 0.0), radius=r)
    assert gamma((2.0, 0.0), obs) == pytest.approx(1.0)
    assert gamma((0.0, 1.0), obs) == pytest.approx(1.0)
    assert gamma((0.0, 2.0), obs) == pytest.approx(2.0)


# ----------------------------------------------------------------- modulation

def test_modulate_no_obstacles_identity():
    out = modulate(Twist(1.0, 0.3), (0.0, 0.0), [])
    assert (out.vx, out.vy) == (1.0, 0.3)


def test_modulate_hand_computed_example():
    obs = StarObstacle(center=(2.0, 0.0), radius=1.0)
    out = modulate(Twist(1.0, 0.0), (1.0, 1.0), [obs])
    assert out.vx == pytest.approx(1.0, abs=1e-9)
    assert out.vy == pytest.approx(math.sqrt(2) / 2, abs=1e-9)


def test_boundary_head_on_has_zero_normal_component():
    obs = StarObstacle(center=(2.0, 0.0), radius=1.0)
    out = modulate(Twist(-1.0, 0.0), (3.0, 0.0), [obs])
    assert out.vx == pytest.approx(0.0, abs=1e-12)


def test_far_field_identity_exact():
    obs = StarObstacle(center=(0.0, 0.0), radius=1.0)
    out = modulate(Twist(0.7, -0.2), (GAMMA_CUT + 0.5, 0.0), [obs])
    assert (out.vx, out.vy) == (0.7, -0.2)


def test_eigenvalues_and_frame():
    obs = StarObstacle(center=(2.0, 0.0), radius=1.0)
    m = modulation_basis((1.0, 1.0), obs)
    g = math.sqrt(2)
    assert m.gamma == pytest.approx(g)
    assert m.eigen_normal == pytest.approx(1 - 1 / g)
    assert m.eigen_tangent == pytest.approx(1 + 1 / g)
    assert m.normal[0] * m.tangent[0] + m.normal[1] * m.tangent[1] == pytest.approx(0.0, abs=1e-9)
    inside = modulation_basis((1.6, 0.0), obs)
    assert inside.eigen_normal == 0.0


def test_tangency_on_boundary():
    rng = np.random.default_rng(0)
    obs = StarObstacle(center=(0.0, 0.0), radius=1.5)
    for _ in range(200):
        phi = rng.uniform(0, 2 * np.pi)
        p = (1.5 * math.cos(phi), 1.5 * math.sin(phi))
        f = Twist(*rng.normal(size=2))
        out = modulate(f, p, [obs])
        outward = out.vx * math.cos(phi) + out.vy * math.sin(phi)
        assert outward >= -1e-9


def test_moving_obstacle_frame():
    # obstacle translating with the flow: a point riding along sees the nominal
    obs = StarObstacle(center=(2.0, 0.0), radius=1.0, velocity=(0.5, 0.0))
    out = modulate(Twist(0.5, 0.0), (2.0, 1.0), [obs])
    # nominal equals obstacle velocity: relative field is zero, output is v_obs
    assert (out.vx, out.vy) == pytest.approx((0.5, 0.0), abs=1e-12)


def test_output_speed_cap():
    obs = StarObstacle(center=(1.2, 0.0), radius=1.0)
    f = Twist(1.0, 0.0)
    for y in np.linspace(-1.5, 1.5, 41):
        out = modulate(f, (0.0, float(y)), [obs])
        assert out.norm() <= 2.0 * f.norm() + 1e-12


def test_multi_obstacle_weights_prefer_closest():
    near = StarObstacle(center=(1.0, 0.0), radius=0.9)
    far = StarObstacle(center=(6.0, 0.0), radius=1.0)
    p = (1.0, 0.95)  # just above the near obstacle's boundary
    both = modulate(Twist(1.0, 0.0), p, [near, far])
    only_near = modulate(Twist(1.0, 0.0), p, [near])
    assert math.hypot(both.vx - only_near.vx, both.vy - only_near.vy) < 0.05


def test_continuity_along_dense_path():
    # Lipschitz-style bound along a path that skirts the obstacle (no head-on ray)
    obs = StarObstacle(center=(0.0, 0.0), radius=1.0)
    f = Twist(1.0, 0.0)
    ys = np.linspace(1.05, 3.0, 4000)
    outs = np.array([[o.vx, o.vy] for o in
                     (modulate(f, (0.3, float(y)), [obs]) for y in ys)])
    step = np.linalg.norm(np.diff(outs, axis=0), axis=1).max()
    path_step = ys[1] - ys[0]
    assert step < 25 * path_step


def test_crowd_to_obstacles_geometry():
    robot = RobotParams(footprint_radius=0.45)
    snap = snapshot([[1.0, 0.0]], radii=[0.3])
    (obs,) = crowd_to_obstacles(snap, robot)
    assert obs.boundary_radius(0.0) == pytest.approx(0.3 + 0.45 + 0.05)


def test_crowd_to_obstacles_empty_and_range():
    robot = RobotParams()
    assert crowd_to_obstacles(snapshot(np.zeros((0, 2))), robot) == []
    snap = snapshot([[15.0, 0.0]])
    assert crowd_to_obstacles(snap, robot, origin=(0.0, 0.0)) == []
    assert len(crowd_to_obstacles(snap, robot, origin=(7.0, 0.0))) == 1


def test_batched_field_matches_scalar_path():
    rng = np.random.default_rng(42)
    for _ in range(50):
        k = int(rng.integers(1, 4))
        centers = rng.uniform(-4, 4, size=(k, 2))
        radii = rng.uniform(0.4, 1.5, size=k)
        vels = rng.normal(0, 0.4, size=(k, 2))
        point = rng.uniform(-6, 6, size=2)
        if any(np.hypot(*(point - c)) <= r for c, r in zip(centers, radii)):
            continue
        nominal = rng.normal(size=2)
        obstacles = [StarObstacle(center=tuple(c), radius=float(r), velocity=tuple(v))
                     for c, r, v in zip(centers, radii, vels)]
        single = modulate(Twist(*nominal), point, obstacles)
        out, _ = modulate_field(point[None, :], nominal[None, :], centers[None, :, :],
                                radii[None, :], vels[None, :, :])
        assert out[0, 0] == pytest.approx(single.vx, abs=1e-12)
        assert out[0, 1] == pytest.approx(single.vy, abs=1e-12)


def _integrate_batch(starts, attractor, centers, radii, mask, dt=0.01, steps=3000):
    pts = starts.copy()
    B, K = radii.shape
    vels = np.zeros((B, K, 2))
    min_gamma = np.full(len(pts), np.inf)
    for _ in range(steps):
        nom = attractor - pts
        nrm = np.linalg.norm(nom, axis=1, keepdims=True)
        nom = np.where(nrm > 1.0, nom / nrm, nom)
        out, gammas = modulate_field(pts, nom, centers, radii, vels, mask)
        min_gamma = np.minimum(min_gamma, np.min(gammas, axis=1))
        pts = pts + out * dt
    return pts, min_gamma


def test_impenetrability_small_batch():
    rng = np.random.default_rng(7)
    B, K = 60, 3
    centers = rng.uniform(-3, 3, size=(B, K, 2))
    radii = rng.uniform(0.5, 1.2, size=(B, K))
    mask = rng.random((B, K)) < 0.8
    mask[:, 0] = True
    starts = np.zeros((B, 2))
    for b in range(B):
        while True:
            p = rng.uniform(-6, 6, size=2)
            g = np.linalg.norm(centers[b] - p, axis=1) / radii[b]
            if np.all(g[mask[b]] >= 1.0):
                starts[b] = p
                break
    attractor = np.array([7.0, 0.0])
    _, min_gamma = _integrate_batch(starts, attractor, centers, radii, mask, steps=1500)
    assert np.all(min_gamma >= 1.0 - 1e-3)


def test_goal_convergence_small_batch():
    rng = np.random.default_rng(9)
    B = 80
    centers = np.tile(np.array([[[0.0, 0.0]]]), (B, 1, 1))
    radii = np.full((B, 1), 1.0)
    mask = np.ones((B, 1), dtype=bool)
    starts = np.zeros((B, 2))
    for b in range(B):
        while True:
            p = rng.uniform(-8, 8, size=2)
            if np.hypot(*p) >= 1.05:
                starts[b] = p
                break
    attractor = np.array([5.0, 0.0])
    pts, _ = _integrate_batch(starts, attractor, centers, radii, mask, steps=4000)
    dist = np.linalg.norm(pts - attractor, axis=1)
    assert np.mean(dist < 0.1) >= 0.99
