"""Rigid-body dynamics of a quadcopter with four tilting arms.

The body frame has rotor ``i`` on arm ``i``; tilting arm ``i`` by ``alpha[i]``
rotates the thrust of that rotor inside the plane normal to the arm.  Rotor
speeds are signed: rotors 1 and 3 spin negative, rotors 2 and 4 positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

E3 = np.array([0.0, 0.0, 1.0])
ROTOR_SIGNS = np.array([-1.0, 1.0, -1.0, 1.0])

# flat layout used by the integrator: P(3) V(3) R(9, row major) omega(3) rotor speeds(4)
STATE_SIZE = 22
_P, _V, _R, _W, _S = slice(0, 3), slice(3, 6), slice(6, 15), slice(15, 18), slice(18, 22)


class GimbalLockError(ValueError):
    """Raised when Euler angles cannot be recovered from a rotation matrix."""


@dataclass(frozen=True)
class VehicleParams:
    m: float = 0.429
    L: float = 0.1785
    g: float = 9.8
    I_B: tuple[float, float, float] = (2.24e-3, 2.99e-3, 4.80e-3)
    K_f: float = 8.048e-6
    K_m: float = 2.423e-7

    def __post_init__(self):
        values = {"m": self.m, "L": self.L, "g": self.g, "K_f": self.K_f, "K_m": self.K_m}
        values.update({f"I_B[{i}]": v for i, v in enumerate(self.I_B)})
        for name, value in values.items():
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive, got {value}")
        object.__setattr__(self, "I_B", tuple(float(v) for v in self.I_B))

    @property
    def inertia(self) -> np.ndarray:
        return np.diag(self.I_B)

    @property
    def inertia_inv(self) -> np.ndarray:
        return np.diag(1.0 / np.asarray(self.I_B))

    @property
    def hover_loading_level(self) -> float:
        """Magnitude of ``w_i`` balancing gravity with all arms untilted."""
        return self.m * self.g / (4.0 * self.K_f)


@dataclass
class VehicleState:
    """Full plant state.  ``R`` maps body vectors into the world frame."""

    P: np.ndarray = field(default_factory=lambda: np.zeros(3))
    V: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotor_speed: np.ndarray = field(default_factory=lambda: 300.0 * ROTOR_SIGNS)

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float).reshape(3)
        self.V = np.asarray(self.V, dtype=float).reshape(3)
        self.R = np.asarray(self.R, dtype=float).reshape(3, 3)
        self.omega = np.asarray(self.omega, dtype=float).reshape(3)
        self.rotor_speed = np.asarray(self.rotor_speed, dtype=float).reshape(4)

    @property
    def loading(self) -> np.ndarray:
        """Signed squared rotor speeds ``w_i = s_i * |s_i|``."""
        return rotor_loading(self.rotor_speed)

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.P, self.V, self.R.ravel(), self.omega, self.rotor_speed])

    @classmethod
    def from_array(cls, x: np.ndarray) -> VehicleState:
        x = np.asarray(x, dtype=float)
        return cls(P=x[_P].copy(), V=x[_V].copy(), R=x[_R].reshape(3, 3).copy(),
                   omega=x[_W].copy(), rotor_speed=x[_S].copy())

    def copy(self) -> VehicleState:
        return VehicleState.from_array(self.to_array())

    def orthonormality_error(self) -> float:
        return float(np.max(np.abs(self.R.T @ self.R - np.eye(3))))

    def has_valid_rotor_signs(self) -> bool:
        return bool(np.all(np.sign(self.rotor_speed) == ROTOR_SIGNS))


def rotor_loading(rotor_speed: np.ndarray) -> np.ndarray:
    rotor_speed = np.asarray(rotor_speed, dtype=float)
    return rotor_speed * np.abs(rotor_speed)


def validate_tilt(alpha, limit: float = np.pi / 2) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float).reshape(4)
    if not np.all(np.isfinite(alpha)) or np.any(np.abs(alpha) > limit + 1e-12):
        raise ValueError(f"tilt angles must lie within +/-{limit:.4g} rad, got {alpha}")
    return alpha


def force_map(alpha, params: VehicleParams) -> np.ndarray:
    """3x4 map from rotor loading ``w`` to body-frame thrust (N)."""
    s, c = np.sin(alpha), np.cos(alpha)
    kf = params.K_f
    return kf * np.array([
        [0.0, s[1], 0.0, -s[3]],
        [s[0], 0.0, -s[2], 0.0],
        [-c[0], c[1], -c[2], c[3]],
    ])


def torque_map(alpha, params: VehicleParams) -> np.ndarray:
    """3x4 map from rotor loading ``w`` to body-frame torque (N m)."""
    s, c = np.sin(alpha), np.cos(alpha)
    lk, km = params.L * params.K_f, params.K_m
    return np.array([
        [0.0, lk * c[1] - km * s[1], 0.0, -lk * c[3] + km * s[3]],
        [lk * c[0] + km * s[0], 0.0, -lk * c[2] - km * s[2], 0.0],
        [lk * s[0] - km * c[0], -lk * s[1] - km * c[1], lk * s[2] - km * c[2], -lk * s[3] - km * c[3]],
    ])


def rotation_from_euler(phi: float, theta: float, psi: float) -> np.ndarray:
    """Z-Y-X (yaw, pitch, roll) rotation, body to world."""
    sf, cf = np.sin(phi), np.cos(phi)
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(psi), np.cos(psi)
    return np.array([
        [ct * cp, sf * st * cp - cf * sp, cf * st * cp + sf * sp],
        [ct * sp, sf * st * sp + cf * cp, cf * st * sp - sf * cp],
        [-st, sf * ct, cf * ct],
    ])


def euler_from_rotation(R: np.ndarray, tol: float = 1e-9) -> tuple[float, float, float]:
    """Inverse of :func:`rotation_from_euler` with pitch in (-pi/2, pi/2)."""
    R = np.asarray(R, dtype=float)
    if abs(R[2, 0]) >= 1.0 - tol:
        raise GimbalLockError(f"pitch at +/-pi/2 (R[2,0] = {R[2, 0]:.12g})")
    theta = -np.arcsin(R[2, 0])
    phi = np.arctan2(R[2, 1], R[2, 2])
    psi = np.arctan2(R[1, 0], R[0, 0])
    return float(phi), float(theta), float(psi)


def hat(v) -> np.ndarray:
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense."""
    u, _, vt = np.linalg.svd(R)
    Q = u @ vt
    if np.linalg.det(Q) < 0:
        u[:, -1] = -u[:, -1]
        Q = u @ vt
    return Q


def _derivative_flat(x: np.ndarray, F: np.ndarray, tau: np.ndarray, u: np.ndarray,
                     params: VehicleParams, inertia_inv_diag: np.ndarray) -> np.ndarray:
    R = x[_R].reshape(3, 3)
    omega = x[_W]
    w = rotor_loading(x[_S])
    dx = np.empty(STATE_SIZE)
    dx[_P] = x[_V]
    dx[_V] = R @ (F @ w) / params.m
    dx[5] -= params.g
    dx[_R] = (R @ hat(omega)).ravel()
    dx[_W] = inertia_inv_diag * (tau @ w)
    dx[_S] = u
    return dx


def state_derivative_array(x: np.ndarray, alpha, u, params: VehicleParams) -> np.ndarray:
    """Same as :func:`state_derivative` on the flat 22-vector layout."""
    return _derivative_flat(np.asarray(x, dtype=float), force_map(alpha, params),
                            torque_map(alpha, params), np.asarray(u, dtype=float),
                            params, 1.0 / np.asarray(params.I_B))


def state_derivative(s: VehicleState, alpha, u, params: VehicleParams) -> VehicleState:
    """Time derivative of every state component, returned as a ``VehicleState``.

    ``u`` are the rotor angular accelerations.  Tilt angles enter
    instantaneously (no tilt-servo dynamics).
    """
    return VehicleState.from_array(state_derivative_array(s.to_array(), alpha, u, params))


def hover_state(params: VehicleParams = VehicleParams(), position=(0.0, 0.0, 0.0)) -> VehicleState:
    """Level hover with untilted arms."""
    speed = np.sqrt(params.hover_loading_level)
    return VehicleState(P=position, rotor_speed=speed * ROTOR_SIGNS)
