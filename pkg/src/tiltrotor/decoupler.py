"""Attitude-position decouplers.

Both decouplers turn a desired horizontal acceleration into reference roll
and pitch.  The modified one also cancels the lateral thrust that the tilted
arms produce at the level-hover equilibrium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .gait import allocation_matrix
from .vehicle_model import VehicleParams, force_map

MAX_CONDITION = 1e12


class SingularAllocationError(ValueError):
    """The hover allocation system has no well-conditioned solution."""


class DecouplerKind(str, Enum):
    CONVENTIONAL = "conventional"
    MODIFIED = "modified"


@dataclass(frozen=True)
class LateralForces:
    F_X: float = 0.0
    F_Y: float = 0.0


@dataclass(frozen=True)
class AttitudeReference:
    phi: float
    theta: float
    psi: float = 0.0


def hover_rotor_loading(alpha, params: VehicleParams) -> np.ndarray:
    """Rotor loading with zero angular acceleration and weight-balancing lift
    at level attitude."""
    A = allocation_matrix(alpha, params)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularAllocationError(f"hover allocation is singular for alpha={np.asarray(alpha)} "
                                      f"(condition number {cond:.3g})")
    return np.linalg.solve(A, np.array([0.0, 0.0, 0.0, params.g]))


def lateral_equilibrium_forces(alpha, params: VehicleParams) -> LateralForces:
    w = hover_rotor_loading(alpha, params)
    fx, fy, _ = force_map(alpha, params) @ w
    return LateralForces(float(fx), float(fy))


def reference_attitude_conventional(acc_x: float, acc_y: float, psi_r: float,
                                    params: VehicleParams) -> AttitudeReference:
    sp, cp = math.sin(psi_r), math.cos(psi_r)
    phi = (acc_x * sp - acc_y * cp) / params.g
    theta = (acc_x * cp + acc_y * sp) / params.g
    return AttitudeReference(phi, theta, psi_r)


def reference_attitude_modified(acc_x: float, acc_y: float, psi_r: float,
                                forces: LateralForces, params: VehicleParams) -> AttitudeReference:
    base = reference_attitude_conventional(acc_x, acc_y, psi_r, params)
    mg = params.m * params.g
    return AttitudeReference(base.phi + forces.F_Y / mg, base.theta - forces.F_X / mg, psi_r)


def reference_attitude(kind: DecouplerKind, acc_x: float, acc_y: float, psi_r: float,
                       alpha, params: VehicleParams) -> AttitudeReference:
    if DecouplerKind(kind) is DecouplerKind.CONVENTIONAL:
        return reference_attitude_conventional(acc_x, acc_y, psi_r, params)
    forces = lateral_equilibrium_forces(alpha, params)
    return reference_attitude_modified(acc_x, acc_y, psi_r, forces, params)
