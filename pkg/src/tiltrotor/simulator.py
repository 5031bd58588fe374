"""Closed-loop simulation of the gait-scheduled tilt-rotor and its error metrics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import _kernel
from .decoupler import DecouplerKind, lateral_equilibrium_forces, reference_attitude_conventional, \
    reference_attitude_modified, LateralForces
from .flc import (GAIN_PRESETS, AttitudeGains, OutputVector, PositionGains, attitude_altitude_command,
                  decoupling_matrix, drift_term, invert_control, measured_outputs, position_command)
from .gait import GaitKind, GaitPlan
from .vehicle_model import (ROTOR_SIGNS, STATE_SIZE, VehicleParams, VehicleState, force_map,
                            orthonormalize, state_derivative_array, torque_map)

DIVERGENCE_RADIUS = 1e6
TRANSIENT_ALLOWANCE = 10.0
CIRCLE_RADIUS = 5.0
CIRCLE_RATE = 0.1
LINE_SPEED = 1.5


class DivergenceError(RuntimeError):
    """The simulated state left the valid region."""


class NonConvergedWarning(UserWarning):
    pass


class ReferenceKind(str, Enum):
    SETPOINT = "setpoint"
    RECTILINEAR = "rectilinear"
    CIRCULAR = "circular"


DEFAULT_DURATION = {
    ReferenceKind.SETPOINT: 60.0,
    ReferenceKind.RECTILINEAR: 60.0,
    ReferenceKind.CIRCULAR: 40.0 * math.pi,
}


@dataclass(frozen=True)
class RefSample:
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    psi: float = 0.0
    # altitude reference and its first three derivatives
    altitude: np.ndarray = field(default_factory=lambda: np.zeros(4))


def reference_sample(kind: ReferenceKind | str, t: float) -> RefSample:
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    kind = ReferenceKind(kind)
    zero = np.zeros(3)
    if kind is ReferenceKind.SETPOINT:
        return RefSample(zero, zero.copy(), zero.copy())
    if kind is ReferenceKind.RECTILINEAR:
        return RefSample(np.array([LINE_SPEED * t, LINE_SPEED * t, 0.0]),
                         np.array([LINE_SPEED, LINE_SPEED, 0.0]), zero)
    a, r = CIRCLE_RATE * t, CIRCLE_RADIUS
    # centripetal acceleration is deliberately not fed forward
    return RefSample(np.array([r * math.cos(a), r * math.sin(a), 0.0]),
                     np.array([-CIRCLE_RATE * r * math.sin(a), CIRCLE_RATE * r * math.cos(a), 0.0]), zero)


@dataclass(frozen=True)
class ExperimentConfig:
    reference: ReferenceKind = ReferenceKind.SETPOINT
    gait: GaitPlan = GaitPlan()
    decoupler: DecouplerKind = DecouplerKind.MODIFIED
    gain_preset: str = "stable"
    attitude_gains: AttitudeGains | None = None
    position_gains: PositionGains = PositionGains()
    dt: float = 1e-3
    duration: float | None = None
    steady_window: float = 10.0
    sup_fraction: float = 0.2
    sup_min_periods: float = 10.0
    initial_rotor_speed: float = 300.0
    saturation: float | None = None
    record_stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "reference", ReferenceKind(self.reference))
        object.__setattr__(self, "decoupler", DecouplerKind(self.decoupler))
        if self.duration is None:
            object.__setattr__(self, "duration", DEFAULT_DURATION[self.reference])
        if self.attitude_gains is None:
            if self.gain_preset not in GAIN_PRESETS:
                raise ValueError(f"gain_preset must be one of {sorted(GAIN_PRESETS)}, got {self.gain_preset!r}")
            object.__setattr__(self, "attitude_gains", GAIN_PRESETS[self.gain_preset])
        self.validate()

    def validate(self) -> None:
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must satisfy dt > 0, got {self.dt}")
        if not self.duration >= 10 * self.dt:
            raise ValueError(f"duration must satisfy duration >= 10*dt, got {self.duration}")
        if self.gait.kind is GaitKind.TROT_INSTANT:
            steps = self.gait.period / 2.0 / self.dt
            if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
                raise ValueError(f"gait.period/2 must be an integer multiple of dt, got (T/2)/dt = {steps}")
        if not 0 < self.steady_window <= self.duration:
            raise ValueError(f"steady_window must satisfy 0 < steady_window <= duration, got {self.steady_window}")
        if not 0 < self.sup_fraction <= 1:
            raise ValueError(f"sup_fraction must satisfy 0 < sup_fraction <= 1, got {self.sup_fraction}")
        if self.sup_min_periods < 0:
            raise ValueError(f"sup_min_periods must be >= 0, got {self.sup_min_periods}")
        if not self.initial_rotor_speed > 1.0:
            raise ValueError(f"initial_rotor_speed must satisfy initial_rotor_speed > 1, got {self.initial_rotor_speed}")
        if self.saturation is not None and not self.saturation > 0:
            raise ValueError(f"saturation must be positive or null, got {self.saturation}")
        if self.record_stride < 1:
            raise ValueError(f"record_stride must be >= 1, got {self.record_stride}")

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def sup_window(self) -> float:
        window = self.sup_fraction * self.duration
        if self.gait.is_trot:
            window = max(window, self.sup_min_periods * self.gait.period)
        # the transient allowance always precedes the window
        return min(window, self.duration - min(TRANSIENT_ALLOWANCE, 0.5 * self.duration))

    def with_(self, **changes) -> ExperimentConfig:
        return replace(self, **changes)


class _Plant:
    """Per-run caches of the tilt-dependent matrices (``alpha`` repeats often)."""

    def __init__(self, params: VehicleParams):
        self.params = params
        self._cache: dict[tuple[float, ...], tuple] = {}

    def matrices(self, alpha: np.ndarray):
        key = tuple(alpha)
        hit = self._cache.get(key)
        if hit is None:
            if len(self._cache) > 4096:
                self._cache.clear()
            hit = (force_map(alpha, self.params), torque_map(alpha, self.params), None)
            self._cache[key] = hit
        return hit

    def lateral(self, alpha: np.ndarray) -> LateralForces:
        key = tuple(alpha)
        F, tau, lat = self.matrices(alpha)
        if lat is None:
            lat = lateral_equilibrium_forces(alpha, self.params)
            self._cache[key] = (F, tau, lat)
        return lat


@dataclass
class ControlOutput:
    u: np.ndarray
    saturated: bool
    attitude_ref: tuple[float, float, float]


class ClosedLoop:
    """Vector field of plant plus controller for one experiment configuration."""

    def __init__(self, cfg: ExperimentConfig, params: VehicleParams = VehicleParams()):
        self.cfg = cfg
        self.params = params
        self._plant = _Plant(params)

    def alpha(self, t: float, step_start: float | None = None) -> np.ndarray:
        gait = self.cfg.gait
        if gait.kind is GaitKind.TROT_INSTANT and step_start is not None:
            # one tilt per step; switches are aligned with step boundaries
            return gait.alpha(step_start + 0.5 * self.cfg.dt)
        return gait.alpha(t)

    def control(self, s: VehicleState, t: float, alpha: np.ndarray) -> ControlOutput:
        cfg, params = self.cfg, self.params
        ref = reference_sample(cfg.reference, t)
        acc_x, acc_y = position_command(ref.position, ref.velocity, ref.acceleration, s, cfg.position_gains)
        if cfg.decoupler is DecouplerKind.MODIFIED:
            att = reference_attitude_modified(acc_x, acc_y, ref.psi, self._plant.lateral(alpha), params)
        else:
            att = reference_attitude_conventional(acc_x, acc_y, ref.psi, params)
        # attitude reference derivatives are not fed forward
        target = OutputVector(
            y=np.array([att.phi, att.theta, att.psi, ref.altitude[0]]),
            dy=np.array([0.0, 0.0, 0.0, ref.altitude[1]]),
            ddy=np.array([0.0, 0.0, 0.0, ref.altitude[2]]),
            dddy=np.array([0.0, 0.0, 0.0, ref.altitude[3]]),
        )
        meas = measured_outputs(s, alpha, params)
        jerk = attitude_altitude_command(target, meas, cfg.attitude_gains)
        u = invert_control(jerk, decoupling_matrix(s, alpha, params), drift_term(s, alpha, params))
        saturated = False
        if cfg.saturation is not None and np.any(np.abs(u) > cfg.saturation):
            u = np.clip(u, -cfg.saturation, cfg.saturation)
            saturated = True
        return ControlOutput(u, saturated, (att.phi, att.theta, att.psi))

    def derivative(self, x: np.ndarray, t: float, step_start: float) -> tuple[np.ndarray, ControlOutput]:
        alpha = self.alpha(t, step_start)
        s = VehicleState.from_array(x)
        ctrl = self.control(s, t, alpha)
        return state_derivative_array(x, alpha, ctrl.u, self.params), ctrl


def initial_state(cfg: ExperimentConfig) -> VehicleState:
    ref = reference_sample(cfg.reference, 0.0)
    return VehicleState(P=ref.position.copy(), rotor_speed=cfg.initial_rotor_speed * ROTOR_SIGNS)


def _check_state(x: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"non-finite state at t={t:.6g}")
    if np.linalg.norm(x[:3]) > DIVERGENCE_RADIUS:
        raise DivergenceError(f"position beyond {DIVERGENCE_RADIUS:g} m at t={t:.6g}")


def rk4_step(loop: ClosedLoop, x: np.ndarray, t: float, dt: float) -> tuple[np.ndarray, ControlOutput]:
    """One classical Runge-Kutta step of the closed loop; returns the new flat state
    and the control evaluated at the start of the step."""
    k1, c1 = loop.derivative(x, t, t)
    k2, c2 = loop.derivative(x + 0.5 * dt * k1, t + 0.5 * dt, t)
    k3, c3 = loop.derivative(x + 0.5 * dt * k2, t + 0.5 * dt, t)
    k4, c4 = loop.derivative(x + dt * k3, t + dt, t)
    x_new = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    c1.saturated = any(c.saturated for c in (c1, c2, c3, c4))
    return x_new, c1


def step(s: VehicleState, t: float, cfg: ExperimentConfig,
         params: VehicleParams = VehicleParams(), loop: ClosedLoop | None = None) -> VehicleState:
    """Advance the closed loop by ``cfg.dt`` and re-orthonormalize the attitude."""
    loop = loop or ClosedLoop(cfg, params)
    x = s.to_array()
    _check_state(x, t)
    x_new, _ = rk4_step(loop, x, t, cfg.dt)
    _check_state(x_new, t + cfg.dt)
    x_new[6:15] = orthonormalize(x_new[6:15].reshape(3, 3)).ravel()
    return VehicleState.from_array(x_new)


def simulate_open_loop(s: VehicleState, alpha, u, duration: float, dt: float,
                       params: VehicleParams = VehicleParams()) -> VehicleState:
    """Plant only, with fixed tilt and rotor accelerations (no controller)."""
    x = s.to_array()
    f = lambda y: state_derivative_array(y, alpha, u, params)
    for _ in range(int(round(duration / dt))):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return VehicleState.from_array(x)


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray  # (N, 22) flat states
    rho: np.ndarray
    alpha: np.ndarray
    u: np.ndarray
    ref_position: np.ndarray
    attitude_ref: np.ndarray
    euler: np.ndarray
    dt: float

    def __len__(self) -> int:
        return len(self.t)

    @property
    def errors(self) -> np.ndarray:
        """Position errors ``state - reference`` with columns (e_x, e_y, e_z)."""
        return self.states[:, :3] - self.ref_position

    def tail(self, window: float) -> slice:
        """Samples in the final ``window`` seconds of the run."""
        start = self.t[-1] - window
        first = int(np.searchsorted(self.t, start - 1e-9 * max(1.0, abs(start))))
        return slice(first, len(self.t))

    def state_at(self, i: int) -> VehicleState:
        return VehicleState.from_array(self.states[i])


@dataclass
class Metrics:
    steady_state_error: tuple[float, float] | None
    sup_error: tuple[float, float, float] | None  # (x, y, norm)
    diverged: bool
    saturation_count: int
    max_orthonormality_error: float
    failure: str | None = None
    converged: bool = True


def steady_state_error(traj: Trajectory, window: float) -> tuple[float, float]:
    if window > traj.t[-1] - traj.t[0] + 1e-12:
        raise ValueError(f"window {window} exceeds the trajectory span")
    err = traj.errors[traj.tail(window), :2]
    mean = err.mean(axis=0)
    spread = err.std(axis=0)
    if np.any(spread > 0.1 * np.abs(mean) + 1e-3):
        warnings.warn(f"steady-state error has not settled (std {spread}, mean {mean})",
                      NonConvergedWarning, stacklevel=2)
    return float(mean[0]), float(mean[1])


def sup_dynamic_error(traj: Trajectory, window: float) -> tuple[float, float, float]:
    if window > traj.t[-1] - traj.t[0] + 1e-12:
        raise ValueError(f"window {window} exceeds the trajectory span")
    err = traj.errors[traj.tail(window), :2]
    return (float(np.max(np.abs(err[:, 0]))), float(np.max(np.abs(err[:, 1]))),
            float(np.max(np.hypot(err[:, 0], err[:, 1]))))


_FAILURES = {
    _kernel.DIVERGED: "DivergenceError",
    _kernel.GIMBAL_LOCK: "GimbalLockError",
    _kernel.ROTOR_STOPPED: "RotorSpeedError",
    _kernel.SINGULAR_DECOUPLING: "SingularDecouplingError",
    _kernel.SINGULAR_ALLOCATION: "SingularAllocationError",
}


def _simulate_python(cfg: ExperimentConfig, params: VehicleParams, x: np.ndarray):
    loop = ClosedLoop(cfg, params)
    n, dt, stride = cfg.steps, cfg.dt, cfg.record_stride
    n_rec = n // stride + 1
    ts = np.empty(n_rec)
    states = np.empty((n_rec, STATE_SIZE))
    rho = np.empty(n_rec)
    us = np.empty((n_rec, 4))
    att_ref = np.empty((n_rec, 3))
    saturation_count = 0
    failure = None
    rec = 0
    for k in range(n + 1):
        t = k * dt
        try:
            _check_state(x, t)
            if k < n:
                x_new, ctrl = rk4_step(loop, x, t, dt)
            else:
                ctrl = loop.control(VehicleState.from_array(x), t, loop.alpha(t, t))
        except Exception as exc:  # controller singularities end the run like divergence
            failure = f"{type(exc).__name__}: {exc}"
            break
        if k % stride == 0:
            ts[rec] = t
            states[rec] = x
            rho[rec] = loop.alpha(t, t)[2]
            us[rec] = ctrl.u
            att_ref[rec] = ctrl.attitude_ref
            rec += 1
        if k < n:
            saturation_count += int(ctrl.saturated)
            x_new[6:15] = orthonormalize(x_new[6:15].reshape(3, 3)).ravel()
            x = x_new
    return ts[:rec], states[:rec], rho[:rec], us[:rec], att_ref[:rec], saturation_count, failure


def _simulate_compiled(cfg: ExperimentConfig, params: VehicleParams, x: np.ndarray):
    gait = cfg.gait
    gait_code = {GaitKind.FIXED: _kernel.GAIT_FIXED, GaitKind.TROT_INSTANT: _kernel.GAIT_INSTANT,
                 GaitKind.TROT_CONTINUOUS: _kernel.GAIT_CONTINUOUS}[gait.kind]
    ref_code = {ReferenceKind.SETPOINT: _kernel.REF_SETPOINT, ReferenceKind.RECTILINEAR: _kernel.REF_RECTILINEAR,
                ReferenceKind.CIRCULAR: _kernel.REF_CIRCULAR}[cfg.reference]
    k_acc, k_rate, k_pos = cfg.attitude_gains.effective()
    pg = cfg.position_gains
    gains = np.concatenate([k_acc, k_rate, k_pos, [pg.kx1, pg.ky1, pg.kx2, pg.ky2]])
    p = np.array([params.m, params.L, params.g, *params.I_B, params.K_f, params.K_m])
    status, k, sat, ts, states, rho, us, att = _kernel.run(
        x, cfg.steps, cfg.dt, cfg.record_stride, gait_code, float(gait.rho_fixed), float(gait.period),
        float(gait.rho_max), ref_code, cfg.decoupler is DecouplerKind.MODIFIED, gains, p,
        -1.0 if cfg.saturation is None else float(cfg.saturation))
    failure = None
    if status != _kernel.OK:
        failure = f"{_FAILURES[status]}: closed loop failed at t={k * cfg.dt:.6g}"
    return ts, states, rho, us, att, int(sat), failure


def simulate(cfg: ExperimentConfig, params: VehicleParams = VehicleParams(),
             state0: VehicleState | None = None, engine: str = "compiled") -> tuple[Trajectory, int, str | None]:
    """Integrate the closed loop; stops early (and reports why) on failure.

    ``engine="python"`` runs the readable reference path built from the public
    functions; ``"compiled"`` runs the equivalent numba kernel.
    """
    x = (state0 or initial_state(cfg)).to_array()
    if engine == "python":
        out = _simulate_python(cfg, params, x)
    elif engine == "compiled":
        out = _simulate_compiled(cfg, params, x)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    ts, states, rho, us, att_ref, saturation_count, failure = out
    R = states[:, 6:15].reshape(-1, 3, 3)
    euler = np.column_stack([np.arctan2(R[:, 2, 1], R[:, 2, 2]),
                             -np.arcsin(np.clip(R[:, 2, 0], -1.0, 1.0)),
                             np.arctan2(R[:, 1, 0], R[:, 0, 0])])
    refs = np.array([reference_sample(cfg.reference, t).position for t in ts]).reshape(-1, 3)
    alpha = np.column_stack([-rho, -rho, rho, rho])
    traj = Trajectory(ts, states, rho, alpha, us, refs, att_ref, euler, cfg.dt * cfg.record_stride)
    return traj, saturation_count, failure


def run_experiment(cfg: ExperimentConfig, params: VehicleParams = VehicleParams(),
                   engine: str = "compiled") -> tuple[Trajectory, Metrics]:
    traj, saturation_count, failure = simulate(cfg, params, engine=engine)
    R = traj.states[:, 6:15].reshape(-1, 3, 3)
    ortho = float(np.max(np.abs(np.einsum("nji,njk->nik", R, R) - np.eye(3)))) if len(traj) else 0.0
    if failure is not None:
        return traj, Metrics(None, None, True, saturation_count, ortho, failure=failure)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonConvergedWarning)
        sse = steady_state_error(traj, cfg.steady_window)
    sup = sup_dynamic_error(traj, cfg.sup_window)
    converged = not any(issubclass(w.category, NonConvergedWarning) for w in caught)
    return traj, Metrics(sse, sup, False, saturation_count, ortho, converged=converged)
