"""Path planning and motion control (PPMC) task on the built-in rover.

The rover starts at the origin with a random heading and has to drive to a
randomly placed waypoint inside a square grid, then to a second one. The
per-step reward pays for progress towards the current waypoint and charges a
constant alive penalty plus a penalty proportional to the yaw rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import env_api
from .env_api import ActionSpec, Environment, ObservationSpec, StepResult
from .errors import ActionDimensionMismatch, EpisodeFinished
from .rover import RoverParams, RoverState, apply_motors, reset_rover, wrap_angle

OBS_DIM = 9
ACT_DIM = 2

OBS_NAMES = (
    "x",
    "y",
    "v_forward",
    "v_lateral",
    "yaw",
    "angle_to_wp",
    "dist_to_wp",
    "wp_x",
    "wp_y",
)


@dataclass(frozen=True)
class RewardConstants:
    c_veloc: float = 50.0
    c_alive: float = 0.5
    c_turn: float = 1.0

    def __post_init__(self):
        if min(self.c_veloc, self.c_alive, self.c_turn) < 0:
            raise ValueError("reward constants must be nonnegative")


@dataclass(frozen=True)
class TaskConfig:
    grid_half_extent: float = 5.0
    goal_radius: float = 0.5
    time_limit: int = 1000
    waypoints_per_episode: int = 2
    goal_progress: float = 0.5  # progress credited on the step a waypoint is captured
    action_repeat: int = 10  # simulator steps per control step
    reward: RewardConstants = field(default_factory=RewardConstants)
    # name -> (min, max); missing names fall back to default_ranges()
    ranges: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.grid_half_extent <= 0 or self.goal_radius <= 0:
            raise ValueError("grid_half_extent and goal_radius must be positive")
        if self.time_limit < 1 or self.waypoints_per_episode < 1 or self.action_repeat < 1:
            raise ValueError("time_limit, waypoints_per_episode and action_repeat must be at least 1")
        unknown = set(self.ranges) - set(OBS_NAMES)
        if unknown:
            raise ValueError(f"unknown normalization ranges: {sorted(unknown)}")
        if isinstance(self.reward, dict):
            object.__setattr__(self, "reward", RewardConstants(**self.reward))

    def default_ranges(self) -> dict:
        h = self.grid_half_extent
        return {
            "x": (-h, h),
            "y": (-h, h),
            "v_forward": (-0.4, 0.4),
            "v_lateral": (-0.4, 0.4),
            "yaw": (-math.pi, math.pi),
            "angle_to_wp": (-math.pi, math.pi),
            "dist_to_wp": (0.0, 2.0 * math.sqrt(2.0) * h),
            "wp_x": (-h, h),
            "wp_y": (-h, h),
        }

    def range_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        merged = {**self.default_ranges(), **{k: tuple(v) for k, v in self.ranges.items()}}
        lo = np.array([merged[name][0] for name in OBS_NAMES], dtype=np.float64)
        hi = np.array([merged[name][1] for name in OBS_NAMES], dtype=np.float64)
        if not np.all(lo < hi):
            raise ValueError("every normalization range needs min < max")
        return lo, hi


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float


@dataclass
class EpisodeState:
    current_waypoint: Waypoint
    prev_distance: float
    waypoints_reached: int = 0
    step_count: int = 0


def sample_waypoint(rng: np.random.Generator, half_extent: float = 5.0) -> Waypoint:
    x, y = rng.uniform(-half_extent, half_extent, size=2)
    return Waypoint(float(x), float(y))


def distance_to(rover: RoverState, wp: Waypoint) -> float:
    return math.hypot(wp.x - rover.x, wp.y - rover.y)


def raw_observation(rover: RoverState, wp: Waypoint) -> np.ndarray:
    dx = wp.x - rover.x
    dy = wp.y - rover.y
    return np.array(
        [
            rover.x,
            rover.y,
            rover.v_forward,
            rover.v_lateral,
            rover.yaw,
            wrap_angle(math.atan2(dy, dx) - rover.yaw),
            math.hypot(dx, dy),
            wp.x,
            wp.y,
        ]
    )


def normalize(raw: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    scaled = 2.0 * (raw - lo) / (hi - lo) - 1.0
    return np.clip(scaled, -1.0, 1.0)


def build_observation(rover: RoverState, wp: Waypoint, config: TaskConfig | None = None) -> np.ndarray:
    lo, hi = (config or TaskConfig()).range_arrays()
    return normalize(raw_observation(rover, wp), lo, hi)


def compute_reward(
    prev_distance: float,
    distance: float,
    yaw_rate: float,
    consts: RewardConstants = RewardConstants(),
    goal_reached: bool = False,
    goal_progress: float = 0.5,
) -> float:
    progress = goal_progress if goal_reached else prev_distance - distance
    return consts.c_veloc * progress - consts.c_alive - consts.c_turn * abs(yaw_rate)


def check_termination(
    ep: EpisodeState,
    distance: float,
    config: TaskConfig,
    rng: np.random.Generator,
    rover: RoverState | None = None,
) -> tuple[bool, bool]:
    """Apply the capture and time-limit rules to ``ep`` after a step.

    Updates the waypoint counter, switches to a fresh waypoint when an
    intermediate one is captured and leaves ``ep.prev_distance`` as the
    baseline for the next step's progress. ``ep.step_count`` must already
    include the step just taken. Returns ``(done, goal_reached)``.
    """
    goal_reached = distance <= config.goal_radius
    done = ep.step_count >= config.time_limit
    ep.prev_distance = distance
    if goal_reached:
        ep.waypoints_reached += 1
        if ep.waypoints_reached >= config.waypoints_per_episode:
            done = True
        elif not done:
            ep.current_waypoint = sample_waypoint(rng, config.grid_half_extent)
            ep.prev_distance = distance_to(rover or RoverState(), ep.current_waypoint)
    return done, goal_reached


class PPMCEnv(Environment):
    """Waypoint navigation with the kinematic rover as simulator.

    Each ``step`` holds the motor command for ``task.action_repeat``
    simulator steps of ``rover.dt`` seconds; rewards, termination and the
    time limit are all counted in these control steps.
    """

    def __init__(self, task: TaskConfig | None = None, rover: RoverParams | None = None, seed: int | None = None):
        self.task = task or TaskConfig()
        self.params = rover or RoverParams()
        self.action_spec = ActionSpec(ACT_DIM, np.zeros(ACT_DIM), np.ones(ACT_DIM))
        self.observation_spec = ObservationSpec(OBS_DIM, -np.ones(OBS_DIM), np.ones(OBS_DIM))
        self._lo, self._hi = self.task.range_arrays()
        self._rng = np.random.default_rng(seed)
        self.rover: RoverState | None = None
        self.episode: EpisodeState | None = None
        self.done = True

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        yaw = self._rng.uniform(-math.pi, math.pi)
        wp = sample_waypoint(self._rng, self.task.grid_half_extent)
        return self.place(reset_rover(yaw), wp)

    def place(self, rover: RoverState, waypoint: Waypoint) -> np.ndarray:
        """Start an episode from an explicit rover state and waypoint."""
        self.rover = rover
        self.episode = EpisodeState(current_waypoint=waypoint, prev_distance=distance_to(rover, waypoint))
        self.done = False
        return self.observe()

    def observe(self) -> np.ndarray:
        return normalize(raw_observation(self.rover, self.episode.current_waypoint), self._lo, self._hi)

    def step(self, action) -> StepResult:
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.shape[0] != self.action_spec.dim:
            raise ActionDimensionMismatch(
                f"expected an action of length {self.action_spec.dim}, got {action.shape[0]}"
            )
        if self.done:
            raise EpisodeFinished("episode is over; call reset() first")
        action = np.where(np.isnan(action), 0.0, action)
        action, n_clamped = self.action_spec.clamp(action)

        ep = self.episode
        for _ in range(self.task.action_repeat):
            self.rover = apply_motors(self.rover, action, self.params)
        ep.step_count += 1
        distance = distance_to(self.rover, ep.current_waypoint)
        prev = ep.prev_distance
        done, goal_reached = check_termination(ep, distance, self.task, self._rng, self.rover)
        reward = compute_reward(
            prev, distance, self.rover.yaw_rate, self.task.reward, goal_reached, self.task.goal_progress
        )
        self.done = done
        info = {
            "progress": prev - distance,
            "yaw_rate": self.rover.yaw_rate,
            "distance_to_goal": distance,
            "goal_reached": float(goal_reached),
            "waypoints_reached": float(ep.waypoints_reached),
            "clamped": float(n_clamped),
            "step": float(ep.step_count),
        }
        return StepResult(self.observe(), reward, done, info)


env_api.register("ppmc", PPMCEnv)
