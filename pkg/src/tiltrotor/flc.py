"""Feedback-linearizing attitude/altitude controller and outer position loop.

Outputs are ``y = (roll, pitch, yaw, Z)``.  The rotor accelerations appear in
the third derivative of ``y``; the controller inverts that map and shapes the
jerk with third-order PD laws.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .vehicle_model import (E3, VehicleParams, VehicleState, euler_from_rotation, force_map,
                            hat, rotor_loading, torque_map)

MAX_CONDITION = 1e12
MIN_ROTOR_SPEED = 1.0


class SingularDecouplingError(ValueError):
    """The decoupling matrix cannot be inverted reliably."""


class RotorSpeedError(SingularDecouplingError):
    """A rotor is (nearly) stopped, so its acceleration no longer acts on the outputs."""


class GainOrdering(str, Enum):
    LITERAL = "literal"
    SWAPPED = "swapped"


@dataclass
class OutputVector:
    y: np.ndarray
    dy: np.ndarray
    ddy: np.ndarray
    dddy: np.ndarray = field(default_factory=lambda: np.zeros(4))


@dataclass(frozen=True)
class AttitudeGains:
    """Third-order PD gains.

    ``kp1``..``kp3`` hold the (roll, pitch, yaw) diagonals.  In literal ordering
    ``kp1`` weighs the acceleration error, ``kp2`` the rate error and ``kp3``
    the angle error; swapped ordering exchanges ``kp1`` and ``kp3``.  The
    altitude triple ``kpz`` always weighs (acceleration, rate, position).
    """

    kp1: tuple[float, float, float] = (1.0, 1.0, 1.0)
    kp2: tuple[float, float, float] = (10.0, 10.0, 1.0)
    kp3: tuple[float, float, float] = (50.0, 50.0, 1.0)
    kpz: tuple[float, float, float] = (10.0, 5.0, 10.0)
    ordering: GainOrdering = GainOrdering.LITERAL

    def __post_init__(self):
        object.__setattr__(self, "ordering", GainOrdering(self.ordering))
        for name in ("kp1", "kp2", "kp3", "kpz"):
            value = tuple(float(v) for v in getattr(self, name))
            if len(value) != 3:
                raise ValueError(f"{name} needs 3 entries, got {len(value)}")
            if any(not v > 0 for v in value):
                raise ValueError(f"{name} entries must be positive, got {value}")
            object.__setattr__(self, name, value)

    def effective(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(acceleration, rate, angle) gain vectors over (roll, pitch, yaw, Z)."""
        k_acc, k_rate, k_pos = self.kp1, self.kp2, self.kp3
        if self.ordering is GainOrdering.SWAPPED:
            k_acc, k_pos = k_pos, k_acc
        z_acc, z_rate, z_pos = self.kpz
        return (np.array([*k_acc, z_acc]), np.array([*k_rate, z_rate]), np.array([*k_pos, z_pos]))


@dataclass(frozen=True)
class PositionGains:
    kx1: float = 1.0
    ky1: float = 1.0
    kx2: float = 1.0
    ky2: float = 1.0

    def __post_init__(self):
        for name in ("kx1", "ky1", "kx2", "ky2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


GAIN_PRESETS: dict[str, AttitudeGains] = {
    "published": AttitudeGains(),
    "published_swapped": AttitudeGains(ordering=GainOrdering.SWAPPED),
    # published swapped ordering with a non-marginal yaw channel (triple pole at -1)
    "swapped_yaw_fixed": AttitudeGains(kp1=(1.0, 1.0, 3.0), kp2=(10.0, 10.0, 3.0),
                                       kp3=(50.0, 50.0, 1.0), ordering=GainOrdering.SWAPPED),
    # triple pole at -20 on roll/pitch and -5 on yaw; altitude as published
    "stable": AttitudeGains(kp1=(60.0, 60.0, 15.0), kp2=(1200.0, 1200.0, 75.0),
                            kp3=(8000.0, 8000.0, 125.0), ordering=GainOrdering.LITERAL),
}


def measured_outputs(s: VehicleState, alpha, params: VehicleParams) -> OutputVector:
    """Outputs and their first two derivatives as seen by the controller.

    Attitude rates and accelerations use the small-angle identification
    ``d(roll, pitch, yaw)/dt = body rates``.
    """
    phi, theta, psi = euler_from_rotation(s.R)
    w = s.loading
    thrust = force_map(alpha, params) @ w
    ang_acc = params.inertia_inv @ torque_map(alpha, params) @ w
    z_acc = (s.R @ thrust)[2] / params.m - params.g
    return OutputVector(
        y=np.array([phi, theta, psi, s.P[2]]),
        dy=np.array([*s.omega, s.V[2]]),
        ddy=np.array([*ang_acc, z_acc]),
    )


def decoupling_matrix(s: VehicleState, alpha, params: VehicleParams) -> np.ndarray:
    speed = np.abs(s.rotor_speed)
    if np.any(speed <= MIN_ROTOR_SPEED):
        raise RotorSpeedError(f"rotor speed magnitude at or below {MIN_ROTOR_SPEED} rad/s: {s.rotor_speed}")
    rows = np.vstack([params.inertia_inv @ torque_map(alpha, params),
                      (E3 @ s.R @ force_map(alpha, params)) / params.m])
    return rows * (2.0 * speed)


def drift_term(s: VehicleState, alpha, params: VehicleParams) -> np.ndarray:
    z = E3 @ s.R @ hat(s.omega) @ force_map(alpha, params) @ rotor_loading(s.rotor_speed)
    return np.array([0.0, 0.0, 0.0, z / params.m])


def output_jerk(s: VehicleState, alpha, u, params: VehicleParams) -> np.ndarray:
    """Third derivative of the outputs for rotor accelerations ``u``."""
    return decoupling_matrix(s, alpha, params) @ np.asarray(u, dtype=float) + drift_term(s, alpha, params)


def attitude_altitude_command(ref: OutputVector, meas: OutputVector, gains: AttitudeGains) -> np.ndarray:
    k_acc, k_rate, k_pos = gains.effective()
    return (ref.dddy + k_acc * (ref.ddy - meas.ddy) + k_rate * (ref.dy - meas.dy)
            + k_pos * (ref.y - meas.y))


def position_command(pos_ref, vel_ref, acc_ref, s: VehicleState, gains: PositionGains) -> tuple[float, float]:
    ax = acc_ref[0] + gains.kx1 * (vel_ref[0] - s.V[0]) + gains.kx2 * (pos_ref[0] - s.P[0])
    ay = acc_ref[1] + gains.ky1 * (vel_ref[1] - s.V[1]) + gains.ky2 * (pos_ref[1] - s.P[1])
    return float(ax), float(ay)


def invert_control(jerk_d, delta: np.ndarray, ma) -> np.ndarray:
    cond = np.linalg.cond(delta)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularDecouplingError(f"decoupling matrix condition number {cond:.3g} exceeds {MAX_CONDITION:g}")
    return np.linalg.solve(delta, np.asarray(jerk_d, dtype=float) - np.asarray(ma, dtype=float))


@dataclass(frozen=True)
class ChannelStability:
    name: str
    gains: tuple[float, ...]
    stable: bool
    margin: float | None


@dataclass(frozen=True)
class StabilityReport:
    channels: tuple[ChannelStability, ...]

    @property
    def stable(self) -> bool:
        return all(ch.stable for ch in self.channels)

    def __getitem__(self, name: str) -> ChannelStability:
        for ch in self.channels:
            if ch.name == name:
                return ch
        raise KeyError(name)


def routh_third_order(k1: float, k2: float, k3: float) -> tuple[bool, float]:
    """Hurwitz test for ``s^3 + k1 s^2 + k2 s + k3``; returns (stable, k1*k2 - k3)."""
    margin = k1 * k2 - k3
    return bool(k1 > 0 and k2 > 0 and k3 > 0 and margin > 0), margin


def check_gain_stability(att: AttitudeGains, pos: PositionGains) -> StabilityReport:
    k_acc, k_rate, k_pos = att.effective()
    channels = []
    for i, name in enumerate(("roll", "pitch", "yaw", "altitude")):
        triple = (float(k_acc[i]), float(k_rate[i]), float(k_pos[i]))
        ok, margin = routh_third_order(*triple)
        channels.append(ChannelStability(name, triple, ok, margin))
    for name, (k1, k2) in (("x", (pos.kx1, pos.kx2)), ("y", (pos.ky1, pos.ky2))):
        channels.append(ChannelStability(name, (k1, k2), bool(k1 > 0 and k2 > 0), None))
    return StabilityReport(tuple(channels))
