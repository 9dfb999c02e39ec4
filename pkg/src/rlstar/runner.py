"""Command-line run file: configure, train, checkpoint, evaluate, bridge.

Configuration is one JSON document; command-line flags override it::

    {
      "task": "ppmc", "algo": "ppo", "seed": 0, "out_dir": "runs/ppmc",
      "layer_sizes": [64, 128, 164, 128, 64],
      "log_interval": 5, "checkpoint_interval": 100,
      "train": {"total_timesteps": 1000000, ...},
      "task_config": {"time_limit": 1000, "reward": {"c_turn": 1.0}, ...},
      "rover": {"dt": 0.05, "track_width": 0.3, ...}
    }
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import signal
import sys
import threading
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import env_api, ppmc  # noqa: F401  (ppmc registers its task)
from .checkpoint import load_checkpoint, save_checkpoint
from .env_api import Environment
from .errors import CheckpointFormatError, ConfigError, NonFiniteLoss, ShapeMismatch, UnknownTask
from .nn import DEFAULT_HIDDEN, AdamState, PolicyParams
from .ppmc import RewardConstants, TaskConfig
from .ppo import METRIC_KEYS, EpisodeCarry, TrainConfig, collect_rollout, finish_batch, ppo_update
from .rover import RoverParams

log = logging.getLogger(__name__)

ALGORITHMS = ("ppo",)

CSV_COLUMNS = (
    "update",
    "timesteps",
    "wall_clock_s",
    "ep_reward_mean",
    "ep_len_mean",
    "success_rate",
    *METRIC_KEYS,
)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


@dataclass
class RunConfig:
    task: str = "ppmc"
    algo: str = "ppo"
    seed: int = 0
    out_dir: str = "runs/default"
    layer_sizes: tuple = DEFAULT_HIDDEN
    log_interval: int = 5
    checkpoint_interval: int = 100
    train: TrainConfig = field(default_factory=TrainConfig)
    task_config: TaskConfig = field(default_factory=TaskConfig)
    rover: RoverParams = field(default_factory=RoverParams)

    def validate(self) -> "RunConfig":
        if self.task not in env_api.registered():
            raise ConfigError(
                f"unknown task {self.task!r} (key 'task'); registered tasks: {', '.join(env_api.registered())}"
            )
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algo!r} (key 'algo'); available: {', '.join(ALGORITHMS)}")
        if self.log_interval < 1 or self.checkpoint_interval < 1:
            raise ConfigError("log_interval and checkpoint_interval must be at least 1")
        if not self.layer_sizes or min(self.layer_sizes) < 1:
            raise ConfigError(f"layer_sizes must be positive integers, got {list(self.layer_sizes)}")
        return self

    def to_dict(self) -> dict:
        out = asdict(self)
        out["layer_sizes"] = list(self.layer_sizes)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        sections = {"train": TrainConfig, "task_config": TaskConfig, "rover": RoverParams}
        kwargs = {}
        known = {f.name for f in fields(cls)}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            if key in sections:
                kwargs[key] = _build_section(sections[key], value, key)
            elif key == "layer_sizes":
                kwargs[key] = tuple(int(n) for n in value)
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs).validate()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


def _build_section(kind, value, name):
    if isinstance(value, kind):
        return value
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be an object")
    allowed = {f.name for f in fields(kind)}
    unknown = set(value) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in section {name!r}: {', '.join(sorted(unknown))}")
    value = dict(value)
    if kind is TaskConfig and isinstance(value.get("reward"), dict):
        try:
            value["reward"] = RewardConstants(**value["reward"])
        except TypeError as exc:
            raise ConfigError(f"bad 'reward' section: {exc}") from exc
    try:
        return kind(**value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad section {name!r}: {exc}") from exc


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return RunConfig.from_dict(data)


def make_env(config: RunConfig) -> Environment:
    try:
        return env_api.make(config.task, task=config.task_config, rover=config.rover)
    except UnknownTask as exc:
        raise ConfigError(str(exc)) from None


def make_policy(config: RunConfig, env: Environment, rng) -> PolicyParams:
    return PolicyParams.initialize(
        env.observation_spec.dim, env.action_spec.dim, config.layer_sizes, rng
    )


@dataclass
class TrainResult:
    policy: PolicyParams
    adam: AdamState
    updates: int
    timesteps: int
    csv_path: Path
    checkpoint_path: Path
    interrupted: bool = False
    points: list = field(default_factory=list)


class _StopFlag:
    """Turns SIGINT/SIGTERM into a flag checked between updates."""

    def __init__(self):
        self.set = False
        self._previous = {}

    def __enter__(self):
        if threading.current_thread() is threading.main_thread():
            for sig in (signal.SIGINT, signal.SIGTERM):
                self._previous[sig] = signal.signal(sig, self._handler)
        return self

    def _handler(self, signum, frame):
        log.warning("signal %s received; finishing the current update", signum)
        self.set = True

    def __exit__(self, *exc):
        for sig, handler in self._previous.items():
            signal.signal(sig, handler)


def _window_point(update, timesteps, wall, episodes, metrics) -> dict:
    point = {"update": update, "timesteps": timesteps, "wall_clock_s": wall}
    if episodes:
        point["ep_reward_mean"] = float(np.mean([e["reward"] for e in episodes]))
        point["ep_len_mean"] = float(np.mean([e["length"] for e in episodes]))
        point["success_rate"] = float(np.mean([e["waypoints"] >= 1 for e in episodes]))
    else:
        point["ep_reward_mean"] = point["ep_len_mean"] = point["success_rate"] = math.nan
    for key in METRIC_KEYS:
        point[key] = float(np.mean([m[key] for m in metrics]))
    return point


def _csv_row(point: dict) -> list:
    return [point[c] if isinstance(point[c], int) else repr(float(point[c])) for c in CSV_COLUMNS]


def train(
    config: RunConfig,
    env: Environment | None = None,
    clock: Callable[[], float] = time.perf_counter,
    progress: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Alternate rollouts and PPO updates until the timestep budget is spent.

    Writes ``metrics.csv`` (one row per ``log_interval`` updates),
    periodic checkpoints under ``checkpoints/`` and ``final.ckpt`` into
    ``config.out_dir``. ``clock`` supplies the wall-clock column.
    """
    config.validate()
    cfg = config.train
    out = Path(config.out_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n")

    init_seq, sample_seq, env_seq = np.random.SeedSequence(config.seed).spawn(3)
    env = env if env is not None else make_env(config)
    policy = make_policy(config, env, np.random.default_rng(init_seq))
    adam = AdamState.zeros(policy.size, eps=cfg.adam_eps)
    rng = np.random.default_rng(sample_seq)
    env_seed = int(env_seq.generate_state(1)[0])

    csv_path = out / "metrics.csv"
    final_path = out / "final.ckpt"
    start = clock()
    points, window_eps, window_metrics = [], [], []
    timesteps = 0
    update = 0
    interrupted = False
    with open(csv_path, "w", newline="") as fh, _StopFlag() as stop:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        carry = EpisodeCarry(env.reset(seed=env_seed))
        while update < cfg.n_updates:
            batch = collect_rollout(env, policy, cfg.n_steps, rng, carry)
            carry = batch.carry
            finish_batch(batch, cfg)
            _, metrics = ppo_update(policy, batch, cfg, adam, rng)
            update += 1
            timesteps += cfg.n_steps
            window_eps += batch.episodes
            window_metrics.append(metrics)
            if update % config.log_interval == 0:
                point = _window_point(update, timesteps, clock() - start, window_eps, window_metrics)
                points.append(point)
                writer.writerow(_csv_row(point))
                fh.flush()
                window_eps, window_metrics = [], []
                if progress:
                    progress(point)
            if update % config.checkpoint_interval == 0:
                save_checkpoint(policy, adam, out / "checkpoints" / f"update_{update:06d}.ckpt")
            if stop.set:
                interrupted = True
                break
    save_checkpoint(policy, adam, final_path)
    return TrainResult(policy, adam, update, timesteps, csv_path, final_path, interrupted, points)


@dataclass
class EvalReport:
    episodes: int
    success_rate: float
    double_success_rate: float
    mean_reward: float
    mean_steps_to_first_waypoint: float
    rewards: list = field(default_factory=list)
    waypoints: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


TRAJECTORY_COLUMNS = ("episode", "step", "reward", "done", "action_left", "action_right")


def evaluate_policy(
    policy: PolicyParams,
    env: Environment,
    episodes: int,
    seed: int = 0,
    deterministic: bool = True,
    trajectory_path=None,
) -> EvalReport:
    """Run ``episodes`` episodes; episode i is reset with seed ``seed + i``."""
    if episodes <= 0:
        return EvalReport(0, math.nan, math.nan, math.nan, math.nan)
    rng = None if deterministic else np.random.default_rng(seed)
    rewards, waypoints, first_steps, rows = [], [], [], []
    obs_dim = env.observation_spec.dim
    for i in range(episodes):
        obs = env.reset(seed=seed + i)
        total, steps, first, reached = 0.0, 0, None, 0.0
        done = False
        while not done:
            action, _, _ = policy.step(obs, rng)
            result = env.step(action)
            steps += 1
            total += result.reward
            reached = result.info.get("waypoints_reached", reached)
            if first is None and reached >= 1:
                first = steps
            if trajectory_path is not None:
                rows.append([i, steps, result.reward, int(result.done), *action, *result.observation])
            obs, done = result.observation, result.done
        rewards.append(total)
        waypoints.append(reached)
        if first is not None:
            first_steps.append(first)
    if trajectory_path is not None:
        with open(trajectory_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([*TRAJECTORY_COLUMNS, *(f"obs_{k}" for k in range(obs_dim))])
            writer.writerows(rows)
    waypoints_arr = np.array(waypoints)
    return EvalReport(
        episodes=episodes,
        success_rate=float(np.mean(waypoints_arr >= 1)),
        double_success_rate=float(np.mean(waypoints_arr >= 2)),
        mean_reward=float(np.mean(rewards)),
        mean_steps_to_first_waypoint=float(np.mean(first_steps)) if first_steps else math.nan,
        rewards=rewards,
        waypoints=waypoints,
    )


def evaluate(
    checkpoint,
    episodes: int,
    seed: int = 0,
    deterministic: bool = True,
    config: RunConfig | None = None,
    env: Environment | None = None,
    trajectory_path=None,
) -> EvalReport:
    config = config or RunConfig()
    env = env if env is not None else make_env(config)
    policy, _ = load_checkpoint(checkpoint)
    if policy.obs_dim != env.observation_spec.dim or policy.act_dim != env.action_spec.dim:
        raise ShapeMismatch(
            f"checkpoint maps {policy.obs_dim} -> {policy.act_dim}, environment needs "
            f"{env.observation_spec.dim} -> {env.action_spec.dim}"
        )
    return evaluate_policy(policy, env, episodes, seed, deterministic, trajectory_path)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rlstar", description="Train and evaluate PPO agents on rover tasks.")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--task", help="registered task name")
    p.add_argument("--algo", help="algorithm name")
    p.add_argument("--timesteps", type=int, help="total training timesteps")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--eval", action="store_true", help="evaluate --checkpoint instead of training")
    p.add_argument("--checkpoint", help="checkpoint file for --eval")
    p.add_argument("--episodes", type=int, default=100, help="evaluation episodes (default 100)")
    p.add_argument("--stochastic", action="store_true", help="sample actions during evaluation")
    p.add_argument("--trajectory-out", help="per-step evaluation trajectory CSV")
    p.add_argument("--bridge-listen", metavar="HOST:PORT", help="serve the task environment over TCP")
    p.add_argument("--bridge-connect", metavar="HOST:PORT", help="use a remote environment")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for flag, key in (("task", "task"), ("algo", "algo"), ("seed", "seed"), ("out", "out_dir")):
        if getattr(args, flag) is not None:
            overrides[key] = getattr(args, flag)
    if args.timesteps is not None:
        try:
            overrides["train"] = replace(config.train, total_timesteps=args.timesteps)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return replace(config, **overrides).validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = resolve_config(args)
        if args.bridge_listen:
            from .bridge import serve

            serve(make_env(config), args.bridge_listen)
            return EXIT_OK
        env = None
        if args.bridge_connect:
            from .bridge import remote_environment

            env = remote_environment(args.bridge_connect)
        if args.eval:
            if not args.checkpoint:
                raise ConfigError("--eval needs --checkpoint")
            report = evaluate(
                args.checkpoint, args.episodes, config.seed, not args.stochastic, config, env, args.trajectory_out
            )
            print(json.dumps({k: v for k, v in report.to_dict().items() if k not in ("rewards", "waypoints")}, indent=2))
            return EXIT_OK

        def show(point):
            print(
                f"update {point['update']:6d}  steps {point['timesteps']:9d}  "
                f"t {point['wall_clock_s']:8.1f}s  reward {point['ep_reward_mean']:9.2f}  "
                f"success {point['success_rate']:.2f}",
                flush=True,
            )

        result = train(config, env=env, progress=show)
        print(f"wrote {result.csv_path} and {result.checkpoint_path}" + (" (interrupted)" if result.interrupted else ""))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteLoss as exc:
        print(f"numerical failure: {exc}\n{json.dumps(exc.dump, indent=2)}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CheckpointFormatError, ShapeMismatch, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
