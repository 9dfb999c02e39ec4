import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rlstar.rover import RoverParams, RoverState, apply_motors, reset_rover, wrap_angle

unit = st.floats(0.0, 1.0)
angles = st.floats(-50.0, 50.0)


def test_full_forward_speed_is_point_two():
    s = apply_motors(reset_rover(0.0), [1.0, 1.0], RoverParams())
    assert s.v_forward == pytest.approx(0.2)
    assert s.yaw_rate == 0.0
    assert s.x == pytest.approx(0.2 * 0.05)
    assert s.y == 0.0


@given(unit)
def test_equal_commands_never_turn(a):
    s = apply_motors(RoverState(yaw=0.3), [a, a], RoverParams())
    assert s.yaw_rate == 0.0


def test_one_sided_turn():
    s = apply_motors(reset_rover(0.0), [0.0, 1.0], RoverParams(track_width=0.3, action_multiplier=2))
    assert s.v_forward == pytest.approx(0.1)
    assert s.yaw_rate == pytest.approx(0.2 / 0.3)
    assert s.yaw_rate == pytest.approx(0.6667, abs=1e-4)


def test_euler_step_by_hand():
    params = RoverParams(track_width=0.5, dt=0.1)
    s = apply_motors(RoverState(x=1.0, y=2.0, yaw=math.pi / 4), [0.25, 0.75], params)
    v_l, v_r = 0.25 * 0.2, 0.75 * 0.2
    v = (v_l + v_r) / 2
    assert s.x == pytest.approx(1.0 + v * math.cos(math.pi / 4) * 0.1)
    assert s.y == pytest.approx(2.0 + v * math.sin(math.pi / 4) * 0.1)
    assert s.yaw == pytest.approx(math.pi / 4 + (v_r - v_l) / 0.5 * 0.1)


@pytest.mark.parametrize(
    "yaw, expected",
    [(0.0, 0.0), (3 * math.pi, math.pi), (-math.pi, math.pi), (math.pi, math.pi), (-math.pi / 2, -math.pi / 2)],
)
def test_reset_rover_wraps(yaw, expected):
    s = reset_rover(yaw)
    assert s.x == s.y == 0.0
    assert s.yaw == pytest.approx(expected)
    assert s.v_forward == s.v_lateral == s.yaw_rate == 0.0


@given(st.floats(-1e6, 1e6))
def test_wrap_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-6)


def test_wrap_tiny_negative_multiple():
    assert wrap_angle(-2 * math.pi - 1e-18) == pytest.approx(0.0)
    assert -math.pi < wrap_angle(math.pi - 2 * math.pi * 7) <= math.pi


@given(angles, st.floats(-5, 5), st.floats(-5, 5))
def test_zero_action_is_fixed_point(yaw, x, y):
    s0 = RoverState(x=x, y=y, yaw=wrap_angle(yaw))
    s1 = apply_motors(s0, [0.0, 0.0], RoverParams())
    assert (s1.x, s1.y, s1.yaw) == (s0.x, s0.y, s0.yaw)


@given(angles, unit, unit, st.floats(0.05, 2.0), st.floats(0.01, 1.0))
def test_step_invariants(yaw, a, b, track, dt):
    params = RoverParams(track_width=track, dt=dt)
    s0 = RoverState(yaw=wrap_angle(yaw))
    s1 = apply_motors(s0, [a, b], params)
    assert math.hypot(s1.x - s0.x, s1.y - s0.y) <= params.max_speed * dt * (1 + 1e-12)
    assert -math.pi < s1.yaw <= math.pi
    assert abs(s1.v_forward) <= params.max_speed * (1 + 1e-12)
    assert s1.v_lateral == 0.0
    mirrored = apply_motors(s0, [b, a], params)
    assert mirrored.yaw_rate == -s1.yaw_rate
    assert mirrored.v_forward == s1.v_forward
    assert apply_motors(s0, [a, b], params) == s1


def test_params_must_be_positive():
    with pytest.raises(ValueError):
        RoverParams(track_width=0.0)
    with pytest.raises(ValueError):
        RoverParams(dt=-0.1)
    p = RoverParams()
    assert (p.max_wheel_speed, p.action_multiplier) == (0.1, 2.0)
    assert np.isclose(p.max_speed, 0.2)
