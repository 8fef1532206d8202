import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_params
from ecoplatoon.dynamics import (
    AeroConfig,
    ContractError,
    DomainError,
    FuelCoeffs,
    RoadProfile,
    RoadSegment,
    VehicleState,
    air_drag_coefficient,
    drag_multiplier,
    environment_resistance,
    fuel_rate,
    grade_force,
    step,
)

AERO = AeroConfig()
LEADER = make_params(1420, 0.02, 1.7, 0.30115)
SECOND = make_params(1320, 0.018, 1.6, 0.29915)
FLAT = RoadProfile.flat()


def test_leader_drag_coefficient(aero, leader_params):
    assert air_drag_coefficient(aero, leader_params) == pytest.approx(0.5 * 0.36 * 1.205 * 1.7)
    assert air_drag_coefficient(aero, leader_params) == pytest.approx(0.36873, abs=1e-5)


def test_follower_drag_at_three_metres(aero, second_params):
    expected = 0.5 * 0.36 * 1.205 * 1.6 * (1 + (0.414 * 3 - 41.29) / 100)
    assert air_drag_coefficient(aero, second_params, 3.0) == pytest.approx(expected)
    assert air_drag_coefficient(aero, second_params, 3.0) == pytest.approx(0.20806, abs=1e-5)


def test_drag_multiplier_clamps_for_large_gaps(aero, second_params):
    assert air_drag_coefficient(aero, second_params, 200.0) == pytest.approx(0.34704, abs=1e-5)
    assert drag_multiplier(aero, 200.0) == 1.0


@pytest.mark.parametrize("gap", [0.0, -2.0])
def test_nonpositive_gap_is_a_collision(aero, second_params, gap):
    with pytest.raises(DomainError):
        air_drag_coefficient(aero, second_params, gap)


@given(st.floats(1e-3, 99.0), st.floats(1e-3, 99.0))
def test_drag_multiplier_monotone_below_breakpoint(a, b):
    lo, hi = sorted((a, b))
    assert drag_multiplier(AERO, lo) <= drag_multiplier(AERO, hi)


@given(st.floats(AERO.beta / AERO.alpha, 1e6))
def test_drag_multiplier_is_one_past_breakpoint(gap):
    assert drag_multiplier(AERO, gap) == 1.0


def test_rolling_resistance_on_flat_road(aero, leader_params):
    force = environment_resistance(aero, leader_params, VehicleState(0.0, 50.0), FLAT, 0.36873)
    assert force == pytest.approx(1420 * 9.81 * 0.02)


def test_only_drag_survives_without_rolling_or_grade(aero):
    params = make_params(1420, 0.0, 1.7, 0.30115)
    assert environment_resistance(aero, params, VehicleState(10.0, 0.0), FLAT, 0.36873) == pytest.approx(36.873)


def test_grade_force_on_the_long_hill(aero, sec5_road):
    params = make_params(1420, 0.0, 1.7, 0.30115)
    assert grade_force(aero, params, 700.0, sec5_road) == pytest.approx(1420 * 9.81 * math.sin(0.1))
    assert grade_force(aero, params, 700.0, sec5_road, gravity_mass_scaling=False) == pytest.approx(9.81 * math.sin(0.1))


def test_sec5_slope_values(sec5_road):
    assert sec5_road.slope(0.0) == pytest.approx(0.01)
    assert sec5_road.slope(100.0) == pytest.approx(0.0)
    assert sec5_road.slope(250.0) == pytest.approx(0.0)
    assert sec5_road.slope(400.0) == pytest.approx(0.0)
    assert sec5_road.slope(900.0) == pytest.approx(0.1)


@pytest.mark.parametrize("boundary", [200.0, 300.0, 500.0])
def test_slope_evaluable_at_segment_boundaries(sec5_road, boundary):
    # the profile is discontinuous at some boundaries, so only finiteness is asserted
    for s in (boundary - 1e-9, boundary, boundary + 1e-9):
        assert math.isfinite(sec5_road.slope(s))
        assert math.isfinite(grade_force(AERO, LEADER, s, sec5_road))


@given(st.lists(st.floats(0.0, 2000.0), min_size=1, max_size=30))
def test_vectorised_slopes_match_scalar(positions):
    road = RoadProfile.paper_sec5()
    got = road.slopes(np.array(positions))
    assert np.array_equal(got, np.array([road.slope(s) for s in positions]))


def test_road_profile_round_trip(sec5_road):
    assert RoadProfile.from_dict(sec5_road.to_dict()) == sec5_road


@pytest.mark.parametrize(
    "segments",
    [
        (),
        (RoadSegment(1.0, math.inf, (0.0,)),),
        (RoadSegment(0.0, 10.0, (0.0,)), RoadSegment(12.0, math.inf, (0.0,))),
        (RoadSegment(0.0, 10.0, (0.0,)),),
    ],
)
def test_bad_road_profiles_rejected(segments):
    with pytest.raises(DomainError):
        RoadProfile(segments)


def test_zero_acceleration_step():
    res = step(LEADER, VehicleState(10.0, 0.0), 0.0, 0.0, 0.0, 0.5)
    assert res.state == VehicleState(10.0, 5.0)
    assert not res.clamped


def test_unit_acceleration_step():
    res = step(LEADER, VehicleState(10.0, 0.0), LEADER.mass, 0.0, 0.0, 0.5)
    assert res.state.speed == pytest.approx(10.5)
    assert res.state.position == pytest.approx(5.125)


def test_full_traction_from_nine_metres_per_second(aero, leader_params):
    drag = air_drag_coefficient(aero, leader_params)
    state = VehicleState(9.0, 10.0)
    env = environment_resistance(aero, leader_params, state, FLAT, drag)
    res = step(leader_params, state, leader_params.max_traction, 0.0, env, 0.5)
    assert res.acceleration == pytest.approx((9230 - 278.6 - 29.87) / 1420, abs=1e-3)


def test_hard_braking_is_clamped_and_flagged():
    res = step(LEADER, VehicleState(0.5, 3.0), 0.0, LEADER.max_brake, 0.0, 0.5)
    assert res.state.speed == 0.0
    assert res.clamped


@pytest.mark.parametrize("traction,brake", [(-1.0, 0.0), (LEADER.max_traction * 1.01, 0.0), (0.0, -1.0), (0.0, LEADER.max_brake * 1.01)])
def test_force_bounds_are_a_contract(traction, brake):
    with pytest.raises(ContractError):
        step(LEADER, VehicleState(5.0, 0.0), traction, brake, 0.0, 0.5)


@given(st.floats(0.0, 40.0), st.floats(-1e4, 1e4), st.sampled_from([0.1, 0.5, 1.0]))
def test_zero_net_force_preserves_speed(v, s, dt):
    res = step(LEADER, VehicleState(v, s), 100.0, 0.0, 100.0, dt)
    assert res.state.speed == v
    assert res.state.position == pytest.approx(s + v * dt, abs=1e-9)


@given(
    st.floats(0.0, 30.0),
    st.floats(0.0, 1.0),
    st.floats(0.0, 1.0),
    st.floats(-3000.0, 3000.0),
)
def test_step_never_produces_negative_speed(v, ft, fb, env):
    res = step(LEADER, VehicleState(v, 0.0), ft * LEADER.max_traction, fb * LEADER.max_brake, env, 0.5)
    assert res.state.speed >= 0.0
    assert res.clamped == (v + res.acceleration * 0.5 < 0.0)


def test_fuel_rate_at_rest_is_zero(leader_params):
    assert fuel_rate(leader_params.fuel_coeffs, 0.0, 0.0) == 0.0


def test_fuel_rate_hand_evaluation(leader_params):
    r = 0.30115
    expected = 1.8085e-4 / r * 1e6 + 2 * 8.6815e-6 / r * 1e4 + 5.4479e-6 / r**2 * 100 + 1.1046e-2 / r * 10
    assert fuel_rate(leader_params.fuel_coeffs, 1000.0, 10.0) == pytest.approx(expected)
    assert fuel_rate(leader_params.fuel_coeffs, 1000.0, 10.0) == pytest.approx(601.48, abs=0.01)


def test_fuel_rate_without_traction(leader_params):
    coeffs = leader_params.fuel_coeffs
    assert coeffs.lin[1] * 10.0 == pytest.approx(0.3668, abs=1e-4)
    # the quadratic speed term adds o22 * v^2 on top of the linear part
    assert fuel_rate(coeffs, 0.0, 10.0) == pytest.approx(1.1046e-2 / 0.30115 * 10 + 5.4479e-6 / 0.30115**2 * 100)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 3), st.floats(-100, 100))
def test_fuel_rate_at_origin_is_the_constant(a, b, d, const):
    coeffs = FuelCoeffs(np.array([[d, 0.0], [0.0, d]]), np.array([a, b]), const)
    assert fuel_rate(coeffs, 0.0, 0.0) == const


@pytest.mark.parametrize("radius", [0.30115, 0.29915, 0.31015])
def test_fuel_rate_nonnegative_on_admissible_grid(radius):
    params = make_params(1500, 0.02, 1.7, radius)
    for f in np.linspace(0.0, params.max_traction, 41):
        for v in np.linspace(0.0, 16.0, 33):
            assert fuel_rate(params.fuel_coeffs, f, v) >= 0.0


def test_fuel_coefficients_validated():
    with pytest.raises(DomainError):
        FuelCoeffs(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))
    with pytest.raises(DomainError):
        FuelCoeffs(np.array([[-1.0, 0.0], [0.0, 1.0]]), np.zeros(2))
    with pytest.raises(DomainError):
        FuelCoeffs(np.eye(2), np.array([math.nan, 0.0]))


@pytest.mark.parametrize(
    "kwargs",
    [dict(mass=0.0), dict(face_area=-1.0), dict(max_traction=0.0), dict(max_brake=0.0), dict(rolling_coeff=0.2)],
)
def test_vehicle_params_validated(kwargs):
    base = dict(mass=1420.0, rolling_coeff=0.02, face_area=1.7, max_traction=9230.0, max_brake=5680.0,
                fuel_coeffs=FuelCoeffs.from_tire_radius(0.3))
    base.update(kwargs)
    from ecoplatoon.dynamics import VehicleParams

    with pytest.raises(DomainError):
        VehicleParams(**base)


def test_negative_speed_state_rejected():
    with pytest.raises(DomainError):
        VehicleState(-0.1, 0.0)
