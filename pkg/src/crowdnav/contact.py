"""Post-contact compliant sliding control.

Sign convention: the contact normal n_hat points from the robot into the
obstacle, the sensed reaction F_c is <= 0 along n_hat, and force equilibrium
sits at F_c = -F_n so that (F_n + F_c) is a proper force error.  In contact
the desired control-point velocity is rebuilt every sample as

    xi_dot_next = (T_s / M) * ((F_n + F_c) * n_hat - D @ xi_dot_prev)
                  + (t_hat . xi_dot_upstream) * t_hat

which regulates the normal force toward F_n while sliding tangentially with
whatever the avoidance layer still wants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Twist


def _default_damping() -> np.ndarray:
    return np.diag([10.0, 10.0])


@dataclass
class ComplianceParams:
    virtual_mass: float = 5.0
    damping: np.ndarray = field(default_factory=_default_damping)
    reference_force: float = 20.0
    sample_time: float = 0.01
    force_collision_threshold: float = 45.0
    lambda_t: float = 1.0
    v_max_holonomic: float = 1.0

    def validate(self) -> "ComplianceParams":
        if not self.virtual_mass > 0:
            raise ValueError("virtual_mass must be positive")
        d = np.asarray(self.damping, dtype=float)
        if d.shape != (2, 2) or not np.all(np.linalg.eigvalsh((d + d.T) / 2) > 0):
            raise ValueError("damping must be a 2x2 positive-definite matrix")
        if not self.reference_force > 0:
            raise ValueError("reference_force must be positive")
        if not self.sample_time > 0:
            raise ValueError("sample_time must be positive")
        if not 0.0 <= self.lambda_t <= 2.0:
            raise ValueError("lambda_t must lie in [0, 2]")
        return self


@dataclass(frozen=True)
class ContactState:
    in_contact: bool
    force: float            # F_c, <= 0 while in contact, 0 otherwise
    normal: tuple[float, float] = (0.0, 0.0)
    tangent: tuple[float, float] = (0.0, 0.0)


FREE = ContactState(False, 0.0)


def estimate_contact(contacts, control_point, upstream: Twist) -> ContactState:
    """Controller-visible contact state from the simulator's active contacts.

    Only bumper-arc contacts are sensed; the strongest one wins.  n_hat is
    the sensed surface normal at the contact (taking it from the control
    point instead skews off-axis contacts and leaks the force regulation
    into the tangent).  The tangent sign follows the upstream avoidance
    velocity so sliding continues where avoidance already wants to go.
    """
    frontal = [c for c in contacts if c.frontal and c.force > 0.0]
    if not frontal:
        return FREE
    best = max(frontal, key=lambda c: c.force)
    nx, ny = best.normal
    tx, ty = -ny, nx
    if tx * upstream.vx + ty * upstream.vy < 0.0:
        tx, ty = -tx, -ty
    return ContactState(True, -best.force, (nx, ny), (tx, ty))


def sliding_update(prev_desired: Twist, upstream: Twist, contact: ContactState,
                   params: ComplianceParams) -> Twist:
    """One discrete step of the force-regulating sliding law (see module doc)."""
    if not contact.in_contact:
        raise ValueError("sliding_update requires an active contact")
    n = np.array(contact.normal)
    t = np.array(contact.tangent)
    prev = np.array([prev_desired.vx, prev_desired.vy])
    up = np.array([upstream.vx, upstream.vy])
    gain = params.sample_time / params.virtual_mass
    out = gain * ((params.reference_force + contact.force) * n - np.asarray(params.damping) @ prev)
    out = out + float(t @ up) * t
    return Twist(float(out[0]), float(out[1])).capped(params.v_max_holonomic)


def blend(avoidance_out: Twist, contact: ContactState, prev_desired: Twist | None,
          params: ComplianceParams) -> Twist:
    """Contact-layer output: pass-through in free space, sliding in contact."""
    if not contact.in_contact:
        return avoidance_out
    prev = prev_desired if prev_desired is not None else Twist(0.0, 0.0)
    upstream = Twist(avoidance_out.vx * params.lambda_t, avoidance_out.vy * params.lambda_t)
    return sliding_update(prev, upstream, contact, params)


class ContactBlender:
    """Stateful wrapper holding the previous desired velocity across ticks.

    On first contact onset the filter state seeds from the currently
    executed twist; brief contact dropouts (up to release_ticks samples)
    keep the last desired velocity so chattering contact stays smooth.
    """

    def __init__(self, params: ComplianceParams, release_ticks: int = 5):
        self.params = params
        self.release_ticks = release_ticks
        self._prev: Twist | None = None
        self._free_count = 0

    def reset(self) -> None:
        self._prev = None
        self._free_count = 0

    def update(self, avoidance_out: Twist, contact: ContactState, executed: Twist) -> Twist:
        if not contact.in_contact:
            self._free_count += 1
            if self._free_count > self.release_ticks:
                self._prev = None
            return avoidance_out
        self._free_count = 0
        if self._prev is None:
            self._prev = executed
        out = blend(avoidance_out, contact, self._prev, self.params)
        self._prev = out
        return out
