import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tiltrotor.gait import (PRINTED_MARGIN_COEFFICIENTS, GaitKind, GaitPlan, allocation_determinant,
                            gait_rho, invertibility_margin, margin_coefficients, minimum_margin_along,
                            tilt_angles_from_rho, trot_margin_closed_form)
from tiltrotor.vehicle_model import VehicleParams

INSTANT = GaitPlan(GaitKind.TROT_INSTANT, period=2.0)
CONTINUOUS = GaitPlan(GaitKind.TROT_CONTINUOUS, period=2.0)


def test_instant_switch_values():
    assert gait_rho(INSTANT, 0.5) == 0.65
    assert gait_rho(INSTANT, 1.0) == 0.65  # closed first half
    assert gait_rho(INSTANT, 1.5) == -0.65
    assert gait_rho(INSTANT, 2.0) == 0.65


def test_continuous_switch_values():
    assert gait_rho(CONTINUOUS, 0.0) == pytest.approx(0.65)
    assert gait_rho(CONTINUOUS, 0.5) == pytest.approx(0.0, abs=1e-15)
    assert gait_rho(CONTINUOUS, 1.0) == pytest.approx(-0.65)
    assert gait_rho(CONTINUOUS, 2.0) == pytest.approx(0.65)


def test_fixed_gait():
    plan = GaitPlan(GaitKind.FIXED, rho_fixed=-0.325)
    assert plan.rho(17.3) == -0.325
    assert np.array_equal(plan.alpha(0.0), [0.325, 0.325, -0.325, -0.325])


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 8.0), st.floats(0.0, 50.0), st.sampled_from(list(GaitKind)[1:]))
def test_periodic_and_bounded(period, t, kind):
    plan = GaitPlan(kind, period=period)
    rho = plan.rho(t)
    assert abs(rho) <= 0.65 + 1e-12
    assert plan.rho(t + period) == pytest.approx(rho, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 8.0), st.floats(0.0, 50.0))
def test_continuous_is_lipschitz(period, t):
    plan = GaitPlan(GaitKind.TROT_CONTINUOUS, period=period)
    h = 1e-6
    slope = 4 * 0.65 / period
    assert abs(plan.rho(t + h) - plan.rho(t)) <= slope * h * (1 + 1e-6) + 1e-12


def test_tilt_assignment():
    assert np.array_equal(tilt_angles_from_rho(0.65), [-0.65, -0.65, 0.65, 0.65])
    assert np.array_equal(tilt_angles_from_rho(0.0), np.zeros(4))
    for rho in np.random.default_rng(1).uniform(-0.65, 0.65, 20):
        assert np.array_equal(tilt_angles_from_rho(-rho), -tilt_angles_from_rho(rho))
    with pytest.raises(ValueError):
        tilt_angles_from_rho(0.7)


def test_plan_validation():
    with pytest.raises(ValueError, match="T > 0"):
        GaitPlan(GaitKind.TROT_INSTANT, period=0.0)
    with pytest.raises(ValueError, match="rho_fixed"):
        GaitPlan(GaitKind.FIXED, rho_fixed=0.8)
    with pytest.raises(ValueError, match="time"):
        gait_rho(INSTANT, -1.0)


def test_margin_examples():
    assert invertibility_margin(np.zeros(4)) == pytest.approx(4.0, abs=1e-12)
    assert invertibility_margin(tilt_angles_from_rho(0.65)) == pytest.approx(4 * math.cos(0.65) ** 2, abs=1e-12)
    assert trot_margin_closed_form(0.0) == 4.0
    assert trot_margin_closed_form(0.65) == pytest.approx(2.535, abs=5e-4)


def test_derived_coefficients_round_to_printed():
    derived = margin_coefficients(VehicleParams())
    for pattern, printed in PRINTED_MARGIN_COEFFICIENTS.items():
        # four significant digits
        tol = 0.5 * 10 ** (math.floor(math.log10(abs(printed))) - 3) if printed else 1e-12
        assert abs(derived[pattern] - printed) <= tol + 1e-12, pattern


def test_printed_table_is_close_to_determinant():
    rng = np.random.default_rng(4)
    for _ in range(50):
        a = rng.uniform(-0.65, 0.65, 4)
        assert invertibility_margin(a, coefficients="printed") == pytest.approx(invertibility_margin(a), abs=1e-3)


def test_margin_proportional_to_determinant():
    rng = np.random.default_rng(7)
    ratios = []
    for _ in range(100):
        a = rng.uniform(-0.65, 0.65, 4)
        ratios.append(invertibility_margin(a) / allocation_determinant(a))
    ratios = np.array(ratios)
    assert np.ptp(ratios) / abs(ratios.mean()) < 1e-6


def test_minimum_margin_along_gait():
    assert minimum_margin_along(CONTINUOUS, 4.0) == pytest.approx(4 * math.cos(0.65) ** 2, rel=1e-9)


def test_unknown_coefficient_set():
    with pytest.raises(ValueError):
        invertibility_margin(np.zeros(4), coefficients="other")
