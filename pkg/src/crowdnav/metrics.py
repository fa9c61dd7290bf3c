"""Trial evaluation metrics and group statistics.

Command-based metrics (contribution, fluency, agreement) operate on commands
normalized by (v_max, w_max).  Jerk is the second finite difference of the
executed twist over a 0.1 s window, time-averaged over the covered span.
The one-way ANOVA p-value comes from the F survival function evaluated
through a local regularized incomplete beta (continued fraction), so the
statistics stack has no external dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

COMMAND_EPS = 0.02           # normalized magnitude below which samples are skipped
COLLISION_FORCE = 45.0       # N, force peak qualifying as an actual collision
BOUNDARY_HYSTERESIS = 0.1    # m the agent must retreat before re-entry counts
JERK_WINDOW = 0.1            # s


class MetricsError(ValueError):
    pass


@dataclass
class MetricsReport:
    success: bool
    t_c: float
    t_free: float
    rel_time_to_goal: float
    path_length_ratio: float       # L_c / L_goal (>= 1 for detours)
    path_length_ratio_inv: float   # L_goal / L_c
    jerk: float
    rel_jerk: float | None
    contribution: float
    contribution_raw: float
    fluency: float
    agreement: float
    density_avg: tuple[float, float, float]
    density_std: tuple[float, float, float]
    density_max: tuple[float, float, float]
    min_distance: float
    virtual_collisions: int
    actual_collisions: int
    blocked_time: float

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("density_avg", "density_std", "density_max"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        kw = dict(d)
        for k in ("density_avg", "density_std", "density_max"):
            kw[k] = tuple(float(x) for x in kw[k])
        if kw.get("rel_jerk") is not None:
            kw["rel_jerk"] = float(kw["rel_jerk"])
        return cls(**kw)


# ----------------------------------------------------------------------
# path efficiency

def rel_time_to_goal(t_free: float, t_c: float) -> float:
    """t_free / t_c; 1 means the crowd cost no time at all."""
    if t_free <= 0 or t_c <= 0:
        raise MetricsError("times must be positive")
    return t_free / t_c


def path_length_ratio(path: np.ndarray, start, goal, goal_margin: float = 0.0) -> tuple[float, float]:
    """(L_c / L_goal, L_goal / L_c) for an executed polyline path.

    L_goal is the shortest required travel: the straight start-goal distance
    minus the goal margin at which trials terminate.
    """
    path = np.asarray(path, dtype=float)
    if len(path) < 2:
        raise MetricsError("path needs at least two points")
    l_goal = math.hypot(goal[0] - start[0], goal[1] - start[1]) - goal_margin
    if l_goal <= 1e-9:
        raise MetricsError("zero-length start-goal segment")
    l_c = float(np.sum(np.linalg.norm(np.diff(path, axis=0), axis=1)))
    if l_c <= 1e-9:
        raise MetricsError("stationary path")
    return l_c / l_goal, l_goal / l_c


def jerk_magnitude(v: np.ndarray, w: np.ndarray, dt: float, window: float = JERK_WINDOW) -> float:
    """Time-averaged sqrt(J_v^2 + J_w^2) from stride-based second differences.

    The stride is half the smoothing window; only interior samples with a
    full stencil contribute, and the average runs over the covered span.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    k = max(1, int(round(0.5 * window / dt)))
    if len(v) < 2 * k + 1:
        raise MetricsError("series shorter than the jerk window")
    h = k * dt
    jv = (v[2 * k:] - 2.0 * v[k:-k] + v[:-2 * k]) / (h * h)
    jw = (w[2 * k:] - 2.0 * w[k:-k] + w[:-2 * k]) / (h * h)
    mag = np.hypot(jv, jw)
    return float(np.sum(mag * dt) / (len(mag) * dt))


def relative_jerk(v, w, dt: float, ref_jerk: float | None = None,
                  window: float = JERK_WINDOW) -> tuple[float, float | None]:
    j = jerk_magnitude(v, w, dt, window)
    if ref_jerk is None:
        return j, None
    if ref_jerk <= 0:
        raise MetricsError("reference jerk must be positive")
    return j, j / ref_jerk


# ----------------------------------------------------------------------
# controller response

def contribution(u_h: np.ndarray, u_out: np.ndarray, shared: bool) -> tuple[float, float]:
    """Mean reactive intervention over retained samples: (clamped, raw).

    Shared control compares output to input (||u_out - u_h|| / ||u_h||);
    autonomy compares magnitudes (||u_out|| / ||u_h||).  Inputs are
    normalized commands of shape (N, 2); near-zero inputs are skipped.
    """
    u_h = np.asarray(u_h, dtype=float)
    u_out = np.asarray(u_out, dtype=float)
    mag = np.linalg.norm(u_h, axis=1)
    keep = mag >= COMMAND_EPS
    if not np.any(keep):
        raise MetricsError("no retained samples above the command threshold")
    if shared:
        c = np.linalg.norm(u_out[keep] - u_h[keep], axis=1) / mag[keep]
    else:
        c = np.linalg.norm(u_out[keep], axis=1) / mag[keep]
    raw = float(np.mean(c))
    return min(max(raw, 0.0), 1.0), raw


def fluency(u_h: np.ndarray) -> float:
    """Mean over ticks of 1 - |u_h(t) - u_h(t-1)|, per-term clamped to [0, 1]."""
    u_h = np.asarray(u_h, dtype=float)
    if len(u_h) < 2:
        raise MetricsError("fluency needs at least two samples")
    d = np.linalg.norm(np.diff(u_h, axis=0), axis=1)
    return float(np.mean(np.clip(1.0 - d, 0.0, 1.0)))


def command_angle(u: np.ndarray, convention: str = "vw") -> np.ndarray:
    """Command direction angle; 'vw' is atan2(v, w), 'wv' is atan2(w, v)."""
    u = np.asarray(u, dtype=float)
    if convention == "vw":
        return np.arctan2(u[..., 0], u[..., 1])
    if convention == "wv":
        return np.arctan2(u[..., 1], u[..., 0])
    raise MetricsError(f"unknown angle convention {convention!r}")


def agreement(z_u: np.ndarray, u_sc: np.ndarray, durations=None,
              convention: str = "vw") -> float:
    """Duration-weighted mean of 1 - |angle(z_u) - angle(u_sc)| / pi.

    Samples where both commands are below the magnitude threshold are
    skipped; the result is invariant to positive scaling of either command.
    """
    z_u = np.asarray(z_u, dtype=float)
    u_sc = np.asarray(u_sc, dtype=float)
    if len(z_u) != len(u_sc) or len(z_u) == 0:
        raise MetricsError("agreement needs paired samples")
    if durations is None:
        durations = np.ones(len(z_u))
    durations = np.asarray(durations, dtype=float)
    keep = (np.linalg.norm(z_u, axis=1) >= COMMAND_EPS) | (np.linalg.norm(u_sc, axis=1) >= COMMAND_EPS)
    if not np.any(keep):
        raise MetricsError("no retained samples above the command threshold")
    diff = command_angle(z_u[keep], convention) - command_angle(u_sc[keep], convention)
    diff = np.abs(np.arctan2(np.sin(diff), np.cos(diff)))
    a = 1.0 - diff / math.pi
    return float(np.sum(a * durations[keep]) / np.sum(durations[keep]))


# ----------------------------------------------------------------------
# crowd interaction

def min_distance(clearances: np.ndarray) -> float:
    """Smallest body-to-body clearance over a trial, floored at zero."""
    c = np.asarray(clearances, dtype=float)
    c = c[np.isfinite(c)]
    if len(c) == 0:
        return math.inf
    return max(float(np.min(c)), 0.0)


class BoundaryCounter:
    """Counts per-agent entries into the virtual boundary with exit hysteresis."""

    def __init__(self, boundary_radius: float, hysteresis: float = BOUNDARY_HYSTERESIS):
        self.r = boundary_radius
        self.h = hysteresis
        self._inside: set[int] = set()
        self.count = 0

    def observe(self, ids: np.ndarray, gaps: np.ndarray) -> None:
        """gaps = center distance - agent radius, per agent id."""
        for i, gap in zip(ids, gaps):
            i = int(i)
            if i in self._inside:
                if gap > self.r + self.h:
                    self._inside.discard(i)
            elif gap < self.r:
                self._inside.add(i)
                self.count += 1


def actual_collisions(events, threshold: float = COLLISION_FORCE) -> int:
    return sum(1 for ev in events if ev.force_peak >= threshold)


# ----------------------------------------------------------------------
# group statistics

def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    MAXIT, EPS, FPMIN = 300, 1e-15, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < FPMIN:
        d = FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < EPS:
            return h
    raise MetricsError("incomplete beta continued fraction did not converge")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise MetricsError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
             + a * math.log(x) + b * math.log1p(-x))
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _beta_cf(a, b, x) / a
    return 1.0 - bt * _beta_cf(b, a, 1.0 - x) / b


def f_survival(f_stat: float, df_between: int, df_within: int) -> float:
    """P(F >= f_stat) for the F distribution."""
    if f_stat <= 0:
        return 1.0
    x = df_within / (df_within + df_between * f_stat)
    return betainc_reg(df_within / 2.0, df_between / 2.0, x)


@dataclass
class GroupComparison:
    groups: dict[str, list[float]]
    f_statistic: float
    p_value: float
    df_between: int
    df_within: int
    stars: str = field(init=False)

    def __post_init__(self):
        if self.p_value < 0.01:
            self.stars = "***"
        elif self.p_value < 0.05:
            self.stars = "**"
        elif self.p_value < 0.1:
            self.stars = "*"
        else:
            self.stars = ""


def anova(groups: dict[str, list[float]] | list[list[float]]) -> GroupComparison:
    """One-way ANOVA; degenerate all-equal data reports F = 0, p = 1."""
    if not isinstance(groups, dict):
        groups = {f"group{i}": g for i, g in enumerate(groups)}
    samples = [np.asarray(g, dtype=float) for g in groups.values()]
    if len(samples) < 2 or any(len(g) < 2 for g in samples):
        raise MetricsError("anova needs at least two groups of at least two values")
    all_vals = np.concatenate(samples)
    grand = float(np.mean(all_vals))
    ssb = sum(len(g) * (float(np.mean(g)) - grand) ** 2 for g in samples)
    ssw = sum(float(np.sum((g - np.mean(g)) ** 2)) for g in samples)
    df_b = len(samples) - 1
    df_w = len(all_vals) - len(samples)
    if ssw <= 0.0:
        if ssb <= 0.0:
            return GroupComparison(dict(groups), 0.0, 1.0, df_b, df_w)
        return GroupComparison(dict(groups), math.inf, 0.0, df_b, df_w)
    f = (ssb / df_b) / (ssw / df_w)
    return GroupComparison(dict(groups), f, f_survival(f, df_b, df_w), df_b, df_w)


@dataclass
class DensityClusters:
    groups: list[list[int]]        # trial indices, ordered low -> high density
    centroids: np.ndarray
    degenerate: bool


def cluster_by_density(features: np.ndarray, max_iter: int = 100) -> DensityClusters:
    """k-means (k=3) on (avg density 2.5 m, max density 2.5 m, avg density 5 m).

    Seeding is deterministic: centroids start at the 1/6, 3/6, 5/6 quantile
    rows after sorting by mean 2.5 m density; clusters are reported ordered
    by centroid mean density.
    """
    features = np.asarray(features, dtype=float)
    n = len(features)
    if n < 3:
        raise MetricsError("need at least three trials to form three clusters")
    order = np.argsort(features[:, 0], kind="stable")
    seeds = [order[int(q * n)] for q in (1 / 6, 3 / 6, 5 / 6)]
    centroids = features[seeds].astype(float)
    assign = -np.ones(n, dtype=int)
    for _step in range(max_iter):
        d = np.linalg.norm(features[:, None, :] - centroids[None, :, :], axis=2)
        new_assign = np.argmin(d, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for k in range(3):
            members = features[assign == k]
            if len(members):
                centroids[k] = members.mean(axis=0)
    rank = np.argsort(centroids[:, 0], kind="stable")
    groups = [sorted(np.flatnonzero(assign == k).tolist()) for k in rank]
    degenerate = any(len(g) == 0 for g in groups) or bool(
        np.allclose(features, features[0]))
    return DensityClusters(groups, centroids[rank], degenerate)


# ----------------------------------------------------------------------
# streaming accumulation

class TrialAccumulator:
    """Builds a MetricsReport incrementally from per-tick data.

    Feeding it live TickRecords or the parsed log lines of the same trial
    gives identical results up to the 9-significant-digit log rounding.
    """

    def __init__(self, robot_v_max: float, robot_w_max: float, footprint_radius: float,
                 virtual_boundary_radius: float, dt: float, shared: bool,
                 angle_convention: str = "vw"):
        self.v_max = robot_v_max
        self.w_max = robot_w_max
        self.footprint = footprint_radius
        self.dt = dt
        self.shared = shared
        self.convention = angle_convention
        self.boundary = BoundaryCounter(virtual_boundary_radius)
        self._uh: list[tuple[float, float]] = []
        self._uout: list[tuple[float, float]] = []
        self._exec_v: list[float] = []
        self._exec_w: list[float] = []
        self._path: list[tuple[float, float]] = []
        self._dens: list[tuple[float, float, float]] = []
        self._minc: list[float] = []
        self._blocked_ticks = 0

    def consume(self, t: float, pose_xy, u_h, u_out, executed, densities,
                min_clearance: float, blocked: bool, agent_ids, agent_gaps) -> None:
        self._uh.append((u_h[0] / self.v_max, u_h[1] / self.w_max))
        self._uout.append((u_out[0] / self.v_max, u_out[1] / self.w_max))
        self._exec_v.append(executed[0])
        self._exec_w.append(executed[1])
        self._path.append((pose_xy[0], pose_xy[1]))
        self._dens.append(tuple(densities))
        self._minc.append(min_clearance)
        if blocked:
            self._blocked_ticks += 1
        self.boundary.observe(agent_ids, agent_gaps)

    def consume_record(self, rec, snap) -> None:
        """Live-path adapter; quantizes inputs exactly like the persisted log
        so streaming results match a later replay bit for bit."""
        from .logio import round_float as rf

        rx, ry = rf(rec.pose.x), rf(rec.pose.y)
        if len(snap):
            px = np.array([rf(x) for x in snap.pos[:, 0].tolist()])
            py = np.array([rf(x) for x in snap.pos[:, 1].tolist()])
            rr = np.array([rf(x) for x in snap.radius.tolist()])
            gaps = np.hypot(px - rx, py - ry) - rr
        else:
            gaps = np.zeros(0)
        self.consume(rf(rec.t), (rx, ry), (rf(rec.u_h.v), rf(rec.u_h.w)),
                     (rf(rec.u_out.v), rf(rec.u_out.w)),
                     (rf(rec.executed.v), rf(rec.executed.w)),
                     (rf(rec.density_2_5), rf(rec.density_5), rf(rec.density_10)),
                     rf(rec.min_clearance) if math.isfinite(rec.min_clearance) else math.inf,
                     rec.blocked, snap.ids, gaps)

    def partial_metrics(self) -> dict:
        """Live readouts for the serve stream; cheap and tolerant of short series."""
        out = {
            "density_2_5": self._dens[-1][0] if self._dens else 0.0,
            "min_clearance": min(self._minc) if self._minc else math.inf,
        }
        try:
            out["fluency"] = fluency(np.array(self._uh))
        except MetricsError:
            out["fluency"] = 1.0
        try:
            out["agreement"] = agreement(np.array(self._uh), np.array(self._uout),
                                         convention=self.convention)
        except MetricsError:
            out["agreement"] = 1.0
        return out

    def finalize(self, success: bool, t_c: float, t_free: float, start, goal,
                 events, ref_jerk: float | None = None,
                 goal_margin: float = 0.0) -> MetricsReport:
        from .logio import round_float as rf

        t_c, t_free = rf(t_c), rf(t_free)
        uh = np.array(self._uh)
        uout = np.array(self._uout)
        dens = np.array(self._dens) if self._dens else np.zeros((0, 3))
        try:
            plr, plr_inv = path_length_ratio(np.array(self._path), start, goal, goal_margin)
        except MetricsError:
            plr, plr_inv = math.nan, math.nan
        j, j_rel = relative_jerk(np.array(self._exec_v), np.array(self._exec_w),
                                 self.dt, ref_jerk)
        try:
            contrib, contrib_raw = contribution(uh, uout, self.shared)
        except MetricsError:
            contrib, contrib_raw = math.nan, math.nan
        try:
            agree = agreement(uh, uout, convention=self.convention)
        except MetricsError:
            agree = math.nan
        return MetricsReport(
            success=success,
            t_c=t_c,
            t_free=t_free,
            rel_time_to_goal=rel_time_to_goal(t_free, t_c),
            path_length_ratio=plr,
            path_length_ratio_inv=plr_inv,
            jerk=j,
            rel_jerk=j_rel,
            contribution=contrib,
            contribution_raw=contrib_raw,
            fluency=fluency(uh),
            agreement=agree,
            density_avg=tuple(float(x) for x in dens.mean(axis=0)) if len(dens) else (0.0, 0.0, 0.0),
            density_std=tuple(float(x) for x in dens.std(axis=0)) if len(dens) else (0.0, 0.0, 0.0),
            density_max=tuple(float(x) for x in dens.max(axis=0)) if len(dens) else (0.0, 0.0, 0.0),
            min_distance=min_distance(np.array(self._minc)),
            virtual_collisions=self.boundary.count,
            actual_collisions=actual_collisions(events),
            blocked_time=self._blocked_ticks * self.dt,
        )
