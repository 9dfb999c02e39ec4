"""Planar kinematic model of a two-motor skid-steer rover on flat ground."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(angle: float) -> float:
    """Wrap ``angle`` into (-pi, pi]."""
    wrapped = math.pi - (math.pi - angle) % TWO_PI
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


@dataclass(frozen=True)
class RoverParams:
    track_width: float = 0.3  # m
    max_wheel_speed: float = 0.1  # m/s at action 1.0, before the multiplier
    action_multiplier: float = 2.0
    dt: float = 0.05  # s per control step

    def __post_init__(self):
        for name in ("track_width", "max_wheel_speed", "action_multiplier", "dt"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"RoverParams.{name} must be positive, got {value!r}")

    @property
    def max_speed(self) -> float:
        return self.max_wheel_speed * self.action_multiplier

    @property
    def max_yaw_rate(self) -> float:
        return self.max_speed / self.track_width


@dataclass(frozen=True)
class RoverState:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0
    v_forward: float = 0.0
    v_lateral: float = 0.0
    yaw_rate: float = 0.0


def reset_rover(seed_yaw: float = 0.0) -> RoverState:
    return RoverState(yaw=wrap_angle(float(seed_yaw)))


def apply_motors(state: RoverState, action, params: RoverParams) -> RoverState:
    """Advance ``state`` by one control step of ``params.dt``.

    ``action`` holds the left and right motor commands, already clamped to
    [0, 1]. Wheel speeds scale linearly with the command; the body velocity
    and yaw rate follow the no-slip differential-drive relations and the pose
    is integrated with one explicit Euler step.
    """
    scale = params.max_wheel_speed * params.action_multiplier
    v_left = float(action[0]) * scale
    v_right = float(action[1]) * scale
    v_forward = 0.5 * (v_left + v_right)
    yaw_rate = (v_right - v_left) / params.track_width
    dt = params.dt
    return RoverState(
        x=state.x + v_forward * math.cos(state.yaw) * dt,
        y=state.y + v_forward * math.sin(state.yaw) * dt,
        yaw=wrap_angle(state.yaw + yaw_rate * dt),
        v_forward=v_forward,
        v_lateral=0.0,
        yaw_rate=yaw_rate,
    )


def as_array(state: RoverState) -> np.ndarray:
    return np.array(
        [state.x, state.y, state.yaw, state.v_forward, state.v_lateral, state.yaw_rate]
    )


__all__ = [
    "RoverParams",
    "RoverState",
    "apply_motors",
    "as_array",
    "reset_rover",
    "wrap_angle",
]
