"""Compiled closed-loop integrator.

Mirrors ``ClosedLoop``/``rk4_step`` in :mod:`tiltrotor.simulator` operation for
operation; the test suite holds the two paths together.  Everything here works
on plain float arrays so numba can compile it.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# status codes
OK = 0
DIVERGED = 1
GIMBAL_LOCK = 2
ROTOR_STOPPED = 3
SINGULAR_DECOUPLING = 4
SINGULAR_ALLOCATION = 5

GAIT_FIXED, GAIT_INSTANT, GAIT_CONTINUOUS = 0, 1, 2
REF_SETPOINT, REF_RECTILINEAR, REF_CIRCULAR = 0, 1, 2

# params layout: m, L, g, Ixx, Iyy, Izz, Kf, Km
MAX_CONDITION = 1e12
MIN_ROTOR_SPEED = 1.0
DIVERGENCE_RADIUS = 1e6


@njit(cache=True)
def gait_rho(kind, rho_fixed, period, rho_max, t):
    if kind == GAIT_FIXED:
        return rho_fixed
    ratio = t / period
    n = math.floor(ratio)
    if math.ceil(ratio) - ratio < 1e-12:
        n = math.ceil(ratio)
    tau = max(t - n * period, 0.0)
    half = period / 2.0
    first = tau <= half or abs(tau - half) < 1e-12 * period
    if kind == GAIT_INSTANT:
        return rho_max if first else -rho_max
    if first:
        return rho_max - 2.0 * rho_max * (2.0 / period) * tau
    return -rho_max + 2.0 * rho_max * (2.0 / period) * (tau - half)


@njit(cache=True)
def reference(kind, t, pos, vel):
    if kind == REF_SETPOINT:
        pos[0] = 0.0
        pos[1] = 0.0
        vel[0] = 0.0
        vel[1] = 0.0
    elif kind == REF_RECTILINEAR:
        pos[0] = 1.5 * t
        pos[1] = 1.5 * t
        vel[0] = 1.5
        vel[1] = 1.5
    else:
        a = 0.1 * t
        pos[0] = 5.0 * math.cos(a)
        pos[1] = 5.0 * math.sin(a)
        vel[0] = -0.5 * math.sin(a)
        vel[1] = 0.5 * math.cos(a)
    pos[2] = 0.0
    vel[2] = 0.0


@njit(cache=True)
def maps(rho, params, F, tau):
    # trot tilt assignment (-rho, -rho, rho, rho)
    L, Kf, Km = params[1], params[6], params[7]
    lk = L * Kf
    s0 = math.sin(-rho)
    s1 = s0
    s2 = math.sin(rho)
    s3 = s2
    c0 = math.cos(rho)
    c1 = c0
    c2 = c0
    c3 = c0
    F[0, 0] = 0.0
    F[0, 1] = Kf * s1
    F[0, 2] = 0.0
    F[0, 3] = -Kf * s3
    F[1, 0] = Kf * s0
    F[1, 1] = 0.0
    F[1, 2] = -Kf * s2
    F[1, 3] = 0.0
    F[2, 0] = -Kf * c0
    F[2, 1] = Kf * c1
    F[2, 2] = -Kf * c2
    F[2, 3] = Kf * c3
    tau[0, 0] = 0.0
    tau[0, 1] = lk * c1 - Km * s1
    tau[0, 2] = 0.0
    tau[0, 3] = -lk * c3 + Km * s3
    tau[1, 0] = lk * c0 + Km * s0
    tau[1, 1] = 0.0
    tau[1, 2] = -lk * c2 - Km * s2
    tau[1, 3] = 0.0
    tau[2, 0] = lk * s0 - Km * c0
    tau[2, 1] = -lk * s1 - Km * c1
    tau[2, 2] = lk * s2 - Km * c2
    tau[2, 3] = -lk * s3 - Km * c3


@njit(cache=True)
def lateral_forces(F, tau, params, out):
    A = np.empty((4, 4))
    for j in range(4):
        for i in range(3):
            A[i, j] = tau[i, j] / params[3 + i]
        A[3, j] = F[2, j] / params[0]
    c = np.linalg.cond(A)
    if not (c <= MAX_CONDITION):
        return SINGULAR_ALLOCATION
    b = np.zeros(4)
    b[3] = params[2]
    w = np.linalg.solve(A, b)
    out[0] = F[0] @ w
    out[1] = F[1] @ w
    return OK


@njit(cache=True)
def closed_loop_derivative(x, t, rho, F, tau, lat, ref_kind, modified, gains, params, saturation,
                           dx, u, att):
    """Fills ``dx`` (state derivative) and ``u`` (rotor accelerations);
    returns (status, saturated)."""
    m, g = params[0], params[2]
    R = x[6:15].reshape((3, 3))
    omega = x[15:18]
    speed = x[18:22]
    w = speed * np.abs(speed)
    pos = np.empty(3)
    vel = np.empty(3)
    reference(ref_kind, t, pos, vel)

    # position loop and decoupler (psi_r = 0, no acceleration feed-forward)
    acc_x = gains[12] * (vel[0] - x[3]) + gains[14] * (pos[0] - x[0])
    acc_y = gains[13] * (vel[1] - x[4]) + gains[15] * (pos[1] - x[1])
    phi_r = -acc_y / g
    theta_r = acc_x / g
    if modified:
        phi_r += lat[1] / (m * g)
        theta_r -= lat[0] / (m * g)
    att[0] = phi_r
    att[1] = theta_r
    att[2] = 0.0

    if abs(R[2, 0]) >= 1.0 - 1e-9:
        return GIMBAL_LOCK, False
    y = np.empty(4)
    y[0] = math.atan2(R[2, 1], R[2, 2])
    y[1] = -math.asin(R[2, 0])
    y[2] = math.atan2(R[1, 0], R[0, 0])
    y[3] = x[2]
    thrust = F @ w
    world = R @ thrust
    dy = np.empty(4)
    ddy = np.empty(4)
    torque = tau @ w
    for i in range(3):
        dy[i] = omega[i]
        ddy[i] = torque[i] / params[3 + i]
    dy[3] = x[5]
    ddy[3] = world[2] / m - g

    ref_y = np.array([phi_r, theta_r, 0.0, 0.0])
    jerk = np.empty(4)
    for i in range(4):
        jerk[i] = -gains[i] * ddy[i] - gains[4 + i] * dy[i] + gains[8 + i] * (ref_y[i] - y[i])

    for i in range(4):
        if abs(speed[i]) <= MIN_ROTOR_SPEED:
            return ROTOR_STOPPED, False
    delta = np.empty((4, 4))
    Rz_F = R[2] @ F
    for j in range(4):
        scale = 2.0 * abs(speed[j])
        for i in range(3):
            delta[i, j] = tau[i, j] / params[3 + i] * scale
        delta[3, j] = Rz_F[j] / m * scale
    # drift: e3^T R hat(omega) F w / m
    cross = np.empty(3)
    cross[0] = omega[1] * thrust[2] - omega[2] * thrust[1]
    cross[1] = omega[2] * thrust[0] - omega[0] * thrust[2]
    cross[2] = omega[0] * thrust[1] - omega[1] * thrust[0]
    jerk[3] -= (R[2] @ cross) / m
    c = np.linalg.cond(delta)
    if not (c <= MAX_CONDITION):
        return SINGULAR_DECOUPLING, False
    sol = np.linalg.solve(delta, jerk)
    saturated = False
    for i in range(4):
        v = sol[i]
        if saturation > 0.0 and abs(v) > saturation:
            v = saturation if v > 0 else -saturation
            saturated = True
        u[i] = v

    # plant
    dx[0:3] = x[3:6]
    for i in range(3):
        dx[3 + i] = world[i] / m
    dx[5] -= g
    Rdot = np.empty((3, 3))
    for i in range(3):
        Rdot[i, 0] = R[i, 1] * omega[2] - R[i, 2] * omega[1]
        Rdot[i, 1] = R[i, 2] * omega[0] - R[i, 0] * omega[2]
        Rdot[i, 2] = R[i, 0] * omega[1] - R[i, 1] * omega[0]
    dx[6:15] = Rdot.ravel()
    for i in range(3):
        dx[15 + i] = torque[i] / params[3 + i]
    dx[18:22] = u
    return OK, saturated


@njit(cache=True)
def orthonormalize(R):
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        for i in range(3):
            U[i, 2] = -U[i, 2]
        Q = U @ Vt
    return Q


@njit(cache=True)
def run(x0, n, dt, stride, gait_kind, rho_fixed, period, rho_max, ref_kind, modified, gains, params,
        saturation):
    """Integrate ``n`` steps.  Returns (status, steps_completed, saturation_count,
    t, states, rho, u, att_ref) over the recorded samples."""
    n_rec = n // stride + 1
    ts = np.empty(n_rec)
    states = np.empty((n_rec, 22))
    rhos = np.empty(n_rec)
    us = np.empty((n_rec, 4))
    atts = np.empty((n_rec, 3))
    F = np.empty((3, 4))
    tau = np.empty((3, 4))
    lat = np.zeros(2)
    x = x0.copy()
    k1 = np.empty(22)
    k2 = np.empty(22)
    k3 = np.empty(22)
    k4 = np.empty(22)
    u1 = np.empty(4)
    u_tmp = np.empty(4)
    att1 = np.empty(3)
    att_tmp = np.empty(3)
    last_rho = np.nan
    sat_count = 0
    rec = 0
    status = OK
    k = 0
    while k <= n:
        t = k * dt
        ok = True
        for v in x:
            if not math.isfinite(v):
                ok = False
        if not ok or math.sqrt(x[0] ** 2 + x[1] ** 2 + x[2] ** 2) > DIVERGENCE_RADIUS:
            status = DIVERGED
            break
        if gait_kind == GAIT_INSTANT:
            step_rho = gait_rho(gait_kind, rho_fixed, period, rho_max, t + 0.5 * dt)
        step_any_sat = False
        stage_rho = 0.0
        # four stages: (time offset, source slope, weight)
        for stage in range(4):
            if stage == 0:
                ts_ = t
                xs = x
                kk = k1
            elif stage == 1:
                ts_ = t + 0.5 * dt
                xs = x + 0.5 * dt * k1
                kk = k2
            elif stage == 2:
                ts_ = t + 0.5 * dt
                xs = x + 0.5 * dt * k2
                kk = k3
            else:
                ts_ = t + dt
                xs = x + dt * k3
                kk = k4
            if gait_kind == GAIT_INSTANT:
                stage_rho = step_rho
            else:
                stage_rho = gait_rho(gait_kind, rho_fixed, period, rho_max, ts_)
            if stage_rho != last_rho:
                maps(stage_rho, params, F, tau)
                if modified:
                    st = lateral_forces(F, tau, params, lat)
                    if st != OK:
                        status = st
                        break
                last_rho = stage_rho
            uu = u1 if stage == 0 else u_tmp
            aa = att1 if stage == 0 else att_tmp
            st, sat = closed_loop_derivative(xs, ts_, stage_rho, F, tau, lat, ref_kind, modified, gains,
                                             params, saturation, kk, uu, aa)
            if st != OK:
                status = st
                break
            step_any_sat = step_any_sat or sat
            if stage == 0 and k == n:
                break
        if status != OK:
            break
        if k % stride == 0:
            ts[rec] = t
            states[rec] = x
            if gait_kind == GAIT_INSTANT:
                rhos[rec] = gait_rho(gait_kind, rho_fixed, period, rho_max, t + 0.5 * dt)
            else:
                rhos[rec] = gait_rho(gait_kind, rho_fixed, period, rho_max, t)
            us[rec] = u1
            atts[rec] = att1
            rec += 1
        if k == n:
            k += 1
            break
        if step_any_sat:
            sat_count += 1
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        x[6:15] = orthonormalize(x[6:15].reshape((3, 3))).ravel()
        k += 1
    return status, k, sat_count, ts[:rec], states[:rec], rhos[:rec], us[:rec], atts[:rec]
