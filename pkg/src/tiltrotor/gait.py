"""Tilt schedules (gaits) and the decoupling-matrix invertibility margin."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .vehicle_model import VehicleParams, force_map, torque_map

RHO_LIMIT = 0.65

# printed four-digit coefficients of the margin polynomial, keyed by which rotors
# contribute a sine (1) instead of a cosine (0)
PRINTED_MARGIN_COEFFICIENTS = {
    (0, 0, 0, 0): 4.000,
    (0, 0, 0, 1): 5.592, (0, 0, 1, 0): -5.592, (0, 1, 0, 0): 5.592, (1, 0, 0, 0): -5.592,
    (0, 0, 1, 1): 0.9716, (0, 1, 1, 0): 0.9716, (1, 0, 0, 1): 0.9716, (1, 1, 0, 0): 0.9716,
    (0, 1, 0, 1): -2.000, (1, 0, 1, 0): -2.000,
    (0, 1, 1, 1): -0.1687, (1, 0, 1, 1): 0.1687, (1, 1, 0, 1): -0.1687, (1, 1, 1, 0): 0.1687,
    (1, 1, 1, 1): 0.0,
}


class GaitKind(str, Enum):
    FIXED = "fixed"
    TROT_INSTANT = "trot_instant"
    TROT_CONTINUOUS = "trot_continuous"


@dataclass(frozen=True)
class GaitPlan:
    kind: GaitKind = GaitKind.FIXED
    rho_fixed: float = 0.0
    period: float = 2.0
    rho_max: float = RHO_LIMIT

    def __post_init__(self):
        object.__setattr__(self, "kind", GaitKind(self.kind))
        if abs(self.rho_fixed) > RHO_LIMIT + 1e-12:
            raise ValueError(f"rho_fixed must satisfy |rho_fixed| <= {RHO_LIMIT}, got {self.rho_fixed}")
        if not (0.0 < self.rho_max <= RHO_LIMIT + 1e-12):
            raise ValueError(f"rho_max must satisfy 0 < rho_max <= {RHO_LIMIT}, got {self.rho_max}")
        if not (self.period > 0 and math.isfinite(self.period)):
            raise ValueError(f"period T must satisfy T > 0, got {self.period}")

    @property
    def is_trot(self) -> bool:
        return self.kind is not GaitKind.FIXED

    def rho(self, t: float) -> float:
        return gait_rho(self, t)

    def alpha(self, t: float) -> np.ndarray:
        return tilt_angles_from_rho(gait_rho(self, t))


def _phase(t: float, period: float) -> float:
    """``t - n*T`` with ``n = floor(t/T)``, snapping near-integer ``t/T``."""
    ratio = t / period
    n = math.floor(ratio)
    if math.ceil(ratio) - ratio < 1e-12:
        n = math.ceil(ratio)
    return max(t - n * period, 0.0)


def gait_rho(plan: GaitPlan, t: float) -> float:
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    if plan.kind is GaitKind.FIXED:
        return float(plan.rho_fixed)
    T, amp = plan.period, plan.rho_max
    tau = _phase(t, T)
    half = T / 2.0
    # snap so that t = n*T + T/2 lands on the closed first half
    on_first_half = tau <= half or abs(tau - half) < 1e-12 * T
    if plan.kind is GaitKind.TROT_INSTANT:
        return amp if on_first_half else -amp
    if on_first_half:
        return amp - 2.0 * amp * (2.0 / T) * tau
    return -amp + 2.0 * amp * (2.0 / T) * (tau - half)


def tilt_angles_from_rho(rho: float) -> np.ndarray:
    """Cat-trot assignment: arms 1 and 2 tilt by ``-rho``, arms 3 and 4 by ``+rho``."""
    if abs(rho) > RHO_LIMIT + 1e-12:
        raise ValueError(f"rho must lie in [-{RHO_LIMIT}, {RHO_LIMIT}], got {rho}")
    return np.array([-rho, -rho, rho, rho], dtype=float)


def allocation_matrix(alpha, params: VehicleParams) -> np.ndarray:
    """4x4 map from rotor loading to (angular acceleration, vertical acceleration)
    at level attitude."""
    return np.vstack([params.inertia_inv @ torque_map(alpha, params),
                      force_map(alpha, params)[2] / params.m])


@lru_cache(maxsize=32)
def margin_coefficients(params: VehicleParams = VehicleParams()) -> dict[tuple[int, ...], float]:
    """Coefficients of the invertibility polynomial in the rotor sines and cosines.

    The allocation determinant is multilinear in ``(cos a_i, sin a_i)`` because
    column ``i`` depends on rotor ``i`` alone, so each coefficient is the
    determinant of the matching cosine/sine column parts.  Normalized so the
    all-cosine coefficient is 4.
    """
    cos_part = allocation_matrix(np.zeros(4), params)
    # cos(pi/2) is 6e-17, not 0
    sin_part = allocation_matrix(np.full(4, np.pi / 2), params) - np.cos(np.pi / 2) * cos_part
    lead = np.linalg.det(cos_part)
    coeffs = {}
    for pattern in itertools.product((0, 1), repeat=4):
        cols = [sin_part[:, i] if bit else cos_part[:, i] for i, bit in enumerate(pattern)]
        coeffs[pattern] = 4.0 * np.linalg.det(np.column_stack(cols)) / lead
    return coeffs


def invertibility_margin(alpha, params: VehicleParams = VehicleParams(),
                         coefficients: str = "derived") -> float:
    """Left side of the tilt-rotor invertibility condition; zero means singular.

    ``coefficients="derived"`` uses the exact coefficients for ``params``
    (these agree with the printed four-digit table for the default vehicle);
    ``"printed"`` uses the rounded table verbatim.
    """
    if coefficients == "derived":
        table = margin_coefficients(params)
    elif coefficients == "printed":
        table = PRINTED_MARGIN_COEFFICIENTS
    else:
        raise ValueError(f"unknown coefficient set {coefficients!r}")
    alpha = np.asarray(alpha, dtype=float)
    c, s = np.cos(alpha), np.sin(alpha)
    total = 0.0
    for pattern, coef in table.items():
        if coef == 0.0:
            continue
        total += coef * math.prod(s[i] if bit else c[i] for i, bit in enumerate(pattern))
    return float(total)


def allocation_determinant(alpha, params: VehicleParams = VehicleParams()) -> float:
    return float(np.linalg.det(allocation_matrix(alpha, params)))


def trot_margin_closed_form(rho: float) -> float:
    return 4.0 * math.cos(rho) ** 2


def minimum_margin_along(plan: GaitPlan, duration: float, samples: int = 2001,
                         params: VehicleParams = VehicleParams()) -> float:
    ts = np.linspace(0.0, duration, samples)
    return min(invertibility_margin(plan.alpha(t), params) for t in ts)
