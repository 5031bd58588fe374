import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tiltrotor.vehicle_model import (ROTOR_SIGNS, GimbalLockError, VehicleParams, VehicleState,
                                     euler_from_rotation, force_map, hat, hover_state, orthonormalize,
                                     rotation_from_euler, state_derivative, state_derivative_array,
                                     torque_map)

P = VehicleParams()
angles = st.floats(-math.pi / 2, math.pi / 2, allow_nan=False)


def force_oracle(alpha, kf):
    F = np.zeros((3, 4))
    for i, a in enumerate(alpha):
        s, c = math.sin(a), math.cos(a)
        if i == 0:
            F[1, 0] = kf * s
            F[2, 0] = -kf * c
        elif i == 1:
            F[0, 1] = kf * s
            F[2, 1] = kf * c
        elif i == 2:
            F[1, 2] = -kf * s
            F[2, 2] = -kf * c
        else:
            F[0, 3] = -kf * s
            F[2, 3] = kf * c
    return F


def torque_oracle(alpha, L, kf, km):
    T = np.zeros((3, 4))
    for i, a in enumerate(alpha):
        s, c = math.sin(a), math.cos(a)
        arm = L * kf
        # arm moment of the tilted thrust plus the (tilted) drag reaction
        if i == 0:
            T[:, 0] = (0.0, arm * c + km * s, arm * s - km * c)
        elif i == 1:
            T[:, 1] = (arm * c - km * s, 0.0, -arm * s - km * c)
        elif i == 2:
            T[:, 2] = (0.0, -arm * c - km * s, arm * s - km * c)
        else:
            T[:, 3] = (-arm * c + km * s, 0.0, -arm * s - km * c)
    return T


def test_force_map_level():
    kf = P.K_f
    expected = np.array([[0, 0, 0, 0], [0, 0, 0, 0], [-kf, kf, -kf, kf]])
    assert np.allclose(force_map(np.zeros(4), P), expected, atol=0)


def test_force_map_first_arm_vertical():
    F = force_map([math.pi / 2, 0, 0, 0], P)
    assert np.allclose(F[:, 0], [0, P.K_f, 0], atol=1e-20)
    assert np.allclose(F[:, 1:], force_map(np.zeros(4), P)[:, 1:])


def test_force_map_trot_column():
    F = force_map([-0.65, -0.65, 0.65, 0.65], P)
    assert F[:, 1] == pytest.approx([P.K_f * math.sin(-0.65), 0.0, P.K_f * math.cos(0.65)], rel=1e-15)


def test_torque_map_level():
    lk, km = P.L * P.K_f, P.K_m
    expected = np.array([[0, lk, 0, -lk], [lk, 0, -lk, 0], [-km, -km, -km, -km]])
    assert np.allclose(torque_map(np.zeros(4), P), expected, rtol=1e-14, atol=0)


def test_torque_map_first_arm_vertical():
    T = torque_map([math.pi / 2, 0, 0, 0], P)
    assert T[:, 0] == pytest.approx([0, P.K_m, P.L * P.K_f], abs=1e-20)


@settings(max_examples=100, deadline=None)
@given(st.lists(angles, min_size=4, max_size=4))
def test_maps_match_entrywise_oracle(alpha):
    assert np.allclose(force_map(alpha, P), force_oracle(alpha, P.K_f), rtol=1e-14, atol=1e-22)
    assert np.allclose(torque_map(alpha, P), torque_oracle(alpha, P.L, P.K_f, P.K_m), rtol=1e-14, atol=1e-22)


def test_rotation_examples():
    assert np.array_equal(rotation_from_euler(0, 0, 0), np.eye(3))
    assert np.allclose(rotation_from_euler(0, 0, math.pi / 2), [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-16)


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(-math.pi / 2 + 0.1, math.pi / 2 - 0.1), st.floats(-3, 3))
def test_rotation_round_trip(phi, theta, psi):
    R = rotation_from_euler(phi, theta, psi)
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(euler_from_rotation(R), (phi, theta, psi), atol=1e-9)


def test_gimbal_lock():
    assert euler_from_rotation(np.eye(3)) == (0.0, 0.0, 0.0)
    with pytest.raises(GimbalLockError):
        euler_from_rotation(rotation_from_euler(0.2, math.pi / 2, 0.1))


def test_hat():
    assert np.array_equal(hat([1, 2, 3]), [[0, -3, 2], [3, 0, -1], [-2, 1, 0]])
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = rng.normal(size=3), rng.normal(size=3)
        assert np.allclose(hat(a) @ a, 0, atol=1e-15)
        cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
        assert np.allclose(hat(a) @ b, cross, atol=1e-14)


def test_orthonormalize_restores_rotation():
    R = rotation_from_euler(0.3, -0.2, 1.0) + 1e-4 * np.random.default_rng(0).normal(size=(3, 3))
    Q = orthonormalize(R)
    assert np.allclose(Q.T @ Q, np.eye(3), atol=1e-14)
    assert np.linalg.det(Q) > 0


def test_hover_derivative_is_zero():
    s = hover_state(P)
    assert np.allclose(s.loading, P.hover_loading_level * ROTOR_SIGNS)
    d = state_derivative(s, np.zeros(4), np.zeros(4), P)
    assert np.allclose(d.to_array(), 0, atol=1e-12)


def test_free_fall_plant():
    s = VehicleState(rotor_speed=np.zeros(4))
    d = state_derivative(s, np.zeros(4), np.zeros(4), P)
    assert np.array_equal(d.V, [0, 0, -P.g])


def derivative_oracle(x, alpha, u):
    R = x[6:15].reshape(3, 3)
    om = x[15:18]
    sp = x[18:22]
    w = sp * np.abs(sp)
    F = force_oracle(alpha, P.K_f)
    T = torque_oracle(alpha, P.L, P.K_f, P.K_m)
    acc = np.array([0, 0, -P.g]) + R @ F @ w / P.m
    domega = (T @ w) / np.array(P.I_B)
    # hat(om) built through the cross-product identity hat(om) e_j = om x e_j
    Rdot = R @ np.column_stack([np.cross(om, e) for e in np.eye(3)])
    return np.concatenate([x[3:6], acc, Rdot.ravel(), domega, u])


def test_derivative_matches_duplicate_oracle():
    rng = np.random.default_rng(11)
    for _ in range(100):
        R = rotation_from_euler(*rng.uniform(-0.5, 0.5, 3))
        s = VehicleState(rng.normal(size=3), rng.normal(size=3), R, rng.normal(size=3),
                         ROTOR_SIGNS * rng.uniform(200, 500, 4))
        alpha = rng.uniform(-0.65, 0.65, 4)
        u = rng.normal(size=4) * 100
        x = s.to_array()
        got = state_derivative_array(x, alpha, u, P)
        want = derivative_oracle(x, alpha, u)
        assert np.allclose(got, want, rtol=1e-12, atol=1e-12)


def test_params_validation():
    with pytest.raises(ValueError, match="m must be strictly positive"):
        VehicleParams(m=0)
    with pytest.raises(ValueError, match=r"I_B\[2\]"):
        VehicleParams(I_B=(1e-3, 1e-3, -1.0))


def test_state_array_round_trip():
    s = hover_state(P, position=(1, 2, 3))
    assert np.array_equal(VehicleState.from_array(s.to_array()).to_array(), s.to_array())
    assert s.has_valid_rotor_signs()
    assert s.orthonormality_error() == 0.0
