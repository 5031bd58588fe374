import numpy as np
import pytest

from tiltrotor.flc import (GAIN_PRESETS, AttitudeGains, GainOrdering, OutputVector, PositionGains,
                           RotorSpeedError, SingularDecouplingError, attitude_altitude_command,
                           check_gain_stability, decoupling_matrix, drift_term, invert_control,
                           measured_outputs, output_jerk, position_command, routh_third_order)
from tiltrotor.vehicle_model import (ROTOR_SIGNS, VehicleParams, VehicleState, euler_from_rotation,
                                     hover_state, rotation_from_euler, state_derivative,
                                     state_derivative_array)

P = VehicleParams()
ZERO4 = np.zeros(4)


def random_state(rng, tilt=0.002):
    return VehicleState(P=rng.normal(size=3), V=rng.normal(size=3) * 0.1,
                        R=rotation_from_euler(*rng.uniform(-tilt, tilt, 3)),
                        omega=rng.uniform(-1e-3, 1e-3, 3),
                        rotor_speed=ROTOR_SIGNS * rng.uniform(200, 500, 4))


def outputs(x):
    R = x[6:15].reshape(3, 3)
    return np.array([*euler_from_rotation(R), x[2]])


def flow(x, alpha, u, h, n=8):
    dt = h / n
    for _ in range(n):
        f = lambda y: state_derivative_array(y, alpha, u, P)
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def fd_jerk(s, alpha, u, h=5e-4):
    x = s.to_array()
    ys = {k: outputs(flow(x, alpha, u, k * h)) for k in (-2, -1, 1, 2)}
    return (ys[2] - 2 * ys[1] + 2 * ys[-1] - ys[-2]) / (2 * h ** 3)


def test_hover_outputs():
    out = measured_outputs(hover_state(P), ZERO4, P)
    assert np.allclose(out.y, 0) and np.allclose(out.dy, 0)
    assert np.allclose(out.ddy, 0, atol=1e-12)


def test_rate_identification():
    s = hover_state(P)
    s.omega = np.array([0.1, 0, 0])
    assert measured_outputs(s, ZERO4, P).dy[0] == 0.1


def test_attitude_acceleration_matches_plant():
    rng = np.random.default_rng(2)
    for _ in range(50):
        s = random_state(rng, tilt=0.1)
        alpha = rng.uniform(-0.65, 0.65, 4)
        d = state_derivative(s, alpha, ZERO4, P)
        assert np.allclose(measured_outputs(s, alpha, P).ddy[:3], d.omega, rtol=1e-12, atol=1e-12)


def test_decoupling_matrix_altitude_row():
    s = hover_state(P)
    s.rotor_speed = 361.4 * ROTOR_SIGNS
    row = decoupling_matrix(s, ZERO4, P)[3]
    assert np.allclose(row, 2 * 361.4 / P.m * P.K_f * ROTOR_SIGNS, rtol=1e-12)


def test_stopped_rotor_rejected():
    s = hover_state(P)
    s.rotor_speed = np.array([0.0, 300, -300, 300])
    with pytest.raises(RotorSpeedError):
        decoupling_matrix(s, ZERO4, P)


def test_drift_term_structure():
    rng = np.random.default_rng(8)
    s = random_state(rng)
    s.omega = np.zeros(3)
    assert np.array_equal(drift_term(s, ZERO4, P), ZERO4)
    for _ in range(20):
        s = random_state(rng, tilt=0.3)
        s.omega = rng.normal(size=3)
        assert np.array_equal(drift_term(s, rng.uniform(-0.6, 0.6, 4), P)[:3], np.zeros(3))


def test_jerk_matches_finite_differences():
    rng = np.random.default_rng(12)
    for _ in range(20):
        s = random_state(rng)
        alpha = rng.uniform(-0.65, 0.65, 4)
        u = rng.normal(size=4) * 300
        want = output_jerk(s, alpha, u, P)
        got = fd_jerk(s, alpha, u)
        assert np.linalg.norm(got - want) <= 0.01 * np.linalg.norm(want)


def test_drift_matches_finite_differences():
    rng = np.random.default_rng(13)
    for _ in range(10):
        s = random_state(rng)
        s.omega = rng.uniform(-1, 1, 3)
        alpha = rng.uniform(-0.65, 0.65, 4)
        got = fd_jerk(s, alpha, ZERO4)[3]
        assert got == pytest.approx(drift_term(s, alpha, P)[3], rel=1e-2, abs=1e-6)


def test_attitude_command_examples():
    g = GAIN_PRESETS["published"]
    zero = OutputVector(np.zeros(4), np.zeros(4), np.zeros(4))
    ref = OutputVector(np.zeros(4), np.zeros(4), np.zeros(4), np.array([1.0, 2, 3, 4]))
    assert np.array_equal(attitude_altitude_command(ref, zero, g), [1, 2, 3, 4])
    ref = OutputVector(np.array([1.0, 0, 0, 0]), np.zeros(4), np.zeros(4))
    assert attitude_altitude_command(ref, zero, g)[0] == 50
    ref = OutputVector(np.zeros(4), np.array([0, 0, 0, 1.0]), np.zeros(4), np.array([0, 0, 0, 0.5]))
    assert attitude_altitude_command(ref, zero, g)[3] == 5.5


def test_swapped_ordering_exchanges_outer_gains():
    k_acc, k_rate, k_pos = GAIN_PRESETS["published_swapped"].effective()
    assert list(k_acc) == [50, 50, 1, 10] and list(k_rate) == [10, 10, 1, 5] and list(k_pos) == [1, 1, 1, 10]


def test_position_command_examples():
    s = hover_state(P)
    assert position_command(np.zeros(3), np.zeros(3), [0.3, -0.2, 0], s, PositionGains()) == (0.3, -0.2)
    assert position_command([1.0, 0, 0], np.zeros(3), np.zeros(3), s, PositionGains()) == (1.0, 0.0)
    assert position_command(np.zeros(3), [0, 2.0, 0], np.zeros(3), s, PositionGains()) == (0.0, 2.0)


def test_invert_control():
    assert np.array_equal(invert_control([1, 2, 3, 4], np.eye(4), ZERO4), [1, 2, 3, 4])
    rng = np.random.default_rng(21)
    for _ in range(50):
        D = rng.normal(size=(4, 4)) + 4 * np.eye(4)
        ma, jd = rng.normal(size=4), rng.normal(size=4)
        U = invert_control(jd, D, ma)
        assert np.allclose(D @ U + ma, jd, atol=1e-10)
    D = np.ones((4, 4))
    with pytest.raises(SingularDecouplingError):
        invert_control(np.ones(4), D, ZERO4)


def test_routh_against_roots():
    rng = np.random.default_rng(31)
    for _ in range(100):
        k = rng.uniform(0.01, 60, 3)
        stable, margin = routh_third_order(*k)
        assert margin == pytest.approx(k[0] * k[1] - k[2])
        assert stable == bool(np.all(np.roots([1, *k]).real < 0))


def test_gain_stability_report():
    lit = check_gain_stability(GAIN_PRESETS["published"], PositionGains())
    assert not lit.stable
    assert lit["roll"].margin == -40 and not lit["roll"].stable
    assert lit["altitude"].stable and lit["altitude"].margin == 40
    assert lit["x"].stable and lit["y"].stable
    swapped = check_gain_stability(GAIN_PRESETS["published_swapped"], PositionGains())
    assert swapped["roll"].stable and swapped["pitch"].stable
    assert check_gain_stability(GAIN_PRESETS["stable"], PositionGains()).stable


def test_gain_validation():
    with pytest.raises(ValueError, match="kp2"):
        AttitudeGains(kp2=(1, 0, 1))
    with pytest.raises(ValueError):
        AttitudeGains(ordering="sideways")
    assert AttitudeGains(ordering="swapped").ordering is GainOrdering.SWAPPED
