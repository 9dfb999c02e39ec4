import math

import numpy as np
import pytest

from rlstar import env_api
from rlstar.env_api import ActionSpec, ObservationSpec
from rlstar.errors import ActionDimensionMismatch, ConfigError, EpisodeFinished, UnknownTask
from rlstar.ppmc import PPMCEnv, TaskConfig, Waypoint
from rlstar.rover import RoverParams, RoverState


@pytest.fixture
def env():
    return env_api.make("ppmc")


def test_specs(env):
    assert env.action_spec.dim == 2
    assert np.array_equal(env.action_spec.low, [0, 0]) and np.array_equal(env.action_spec.high, [1, 1])
    assert env.observation_spec.dim == 9
    assert np.all(env.observation_spec.low == -1) and np.all(env.observation_spec.high == 1)


def test_spec_invariants():
    with pytest.raises(ValueError):
        ActionSpec(2, [0, 1], [1, 1])
    with pytest.raises(ValueError):
        ObservationSpec(3, [0, 0], [1, 1])


def test_reset_deterministic(env):
    a = env.reset(seed=7)
    b = env.reset(seed=7)
    assert a.tobytes() == b.tobytes()
    assert np.all(np.abs(a) <= 1)


def test_different_seeds_move_waypoint(env):
    a = env.reset(seed=7)
    b = env.reset(seed=8)
    assert not np.array_equal(a[7:9], b[7:9])


def test_seedless_reset_continues_stream(env):
    env.reset(seed=1)
    first = env.reset()
    env.reset(seed=1)
    assert np.array_equal(env.reset(), first)


def test_zero_action_from_rest(env):
    env.reset(seed=7)
    before = env.rover
    r = env.step([0.0, 0.0])
    assert r.reward == -0.5
    assert (env.rover.x, env.rover.y, env.rover.yaw) == (before.x, before.y, before.yaw)
    for key in ("progress", "yaw_rate", "distance_to_goal"):
        assert key in r.info


def test_straight_at_waypoint_single_sim_step():
    env = PPMCEnv(TaskConfig(action_repeat=1), RoverParams(dt=0.05, action_multiplier=2))
    env.reset(seed=0)
    env.place(RoverState(), Waypoint(5.0, 0.0))
    r = env.step([1.0, 1.0])
    assert r.info["progress"] == pytest.approx(0.01)
    assert r.reward == pytest.approx(0.0, abs=1e-12)
    assert r.info["distance_to_goal"] == pytest.approx(4.99)


def test_control_step_repeats_simulator_steps():
    env = PPMCEnv(TaskConfig(action_repeat=10))
    env.reset(seed=0)
    env.place(RoverState(), Waypoint(5.0, 0.0))
    r = env.step([1.0, 1.0])
    assert r.info["progress"] == pytest.approx(0.1)
    assert r.reward == pytest.approx(50 * 0.1 - 0.5)


def test_wrong_action_length(env):
    env.reset(seed=0)
    with pytest.raises(ActionDimensionMismatch):
        env.step([0.1, 0.2, 0.3])


def test_step_after_done():
    env = PPMCEnv(TaskConfig(time_limit=2))
    env.reset(seed=0)
    env.step([0, 0])
    assert env.step([0, 0]).done
    with pytest.raises(EpisodeFinished):
        env.step([0, 0])
    env.reset()
    env.step([0, 0])


def test_step_before_reset():
    with pytest.raises(EpisodeFinished):
        PPMCEnv().step([0, 0])


def test_out_of_range_actions_clamped(env):
    env.reset(seed=4)
    r = env.step([-3.0, 7.0])
    assert r.info["clamped"] == 2.0
    assert env.rover.v_forward == pytest.approx(0.1)
    r = env.step([0.5, 0.5])
    assert r.info["clamped"] == 0.0


def test_trajectory_reproducible():
    def run():
        env = PPMCEnv()
        rng = np.random.default_rng(11)
        out = [env.reset(seed=3).tobytes()]
        for _ in range(400):
            r = env.step(rng.uniform(-0.2, 1.2, 2))
            out.append((r.observation.tobytes(), r.reward, r.done))
            if r.done:
                out.append(env.reset().tobytes())
        return out

    assert run() == run()


def test_nonfinite_actions_stay_finite(env):
    env.reset(seed=2)
    for action in ([np.nan, 0.3], [np.inf, -np.inf], [1e300, -1e300]):
        r = env.step(action)
        assert math.isfinite(r.reward) and np.all(np.isfinite(r.observation))


def test_registry():
    assert "ppmc" in env_api.registered()
    with pytest.raises(UnknownTask) as info:
        env_api.make("lunar-cave")
    assert "lunar-cave" in str(info.value) and "ppmc" in str(info.value)
    assert isinstance(info.value, ConfigError)
    with pytest.raises(ValueError):
        env_api.register("ppmc", PPMCEnv)


def test_registry_kwargs():
    env = env_api.make("ppmc", task=TaskConfig(time_limit=3))
    env.reset(seed=0)
    assert [env.step([0, 0]).done for _ in range(3)] == [False, False, True]
