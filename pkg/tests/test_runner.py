import csv
import itertools
import json
import math

import numpy as np
import pytest

from rlstar.checkpoint import load_checkpoint, save_checkpoint
from rlstar.errors import ConfigError, ShapeMismatch
from rlstar.nn import PolicyParams
from rlstar.ppo import TrainConfig
from rlstar.runner import (
    CSV_COLUMNS,
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    RunConfig,
    evaluate,
    evaluate_policy,
    load_config,
    main,
    make_env,
    train,
)


def counter_clock():
    ticks = itertools.count()
    return lambda: float(next(ticks))


def small_config(tmp_path, name="run", **train_kw):
    return RunConfig(
        seed=3,
        out_dir=str(tmp_path / name),
        train=TrainConfig(total_timesteps=2560, **train_kw),
    )


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_ten_updates_two_points(tmp_path):
    result = train(small_config(tmp_path), clock=counter_clock())
    assert result.updates == 10 and result.timesteps == 2560
    rows = read_csv(result.csv_path)
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 3
    assert all(len(r) == len(CSV_COLUMNS) for r in rows)
    assert [int(r[0]) for r in rows[1:]] == [5, 10]
    assert [int(r[1]) for r in rows[1:]] == [1280, 2560]
    walls = [float(r[2]) for r in rows[1:]]
    assert walls[0] < walls[1]
    assert result.checkpoint_path.exists()
    cfg = json.loads((tmp_path / "run" / "config.json").read_text())
    assert RunConfig.from_dict(cfg).train.total_timesteps == 2560


def test_deterministic_outputs(tmp_path):
    a = train(small_config(tmp_path, "a"), clock=counter_clock())
    b = train(small_config(tmp_path, "b"), clock=counter_clock())
    assert a.csv_path.read_bytes() == b.csv_path.read_bytes()
    assert a.checkpoint_path.read_bytes() == b.checkpoint_path.read_bytes()


def test_seed_changes_outputs(tmp_path):
    a = train(small_config(tmp_path, "a"), clock=counter_clock())
    cfg = small_config(tmp_path, "b")
    cfg.seed = 4
    b = train(cfg, clock=counter_clock())
    assert a.checkpoint_path.read_bytes() != b.checkpoint_path.read_bytes()


def test_periodic_checkpoints(tmp_path):
    cfg = small_config(tmp_path)
    cfg.checkpoint_interval = 4
    train(cfg, clock=counter_clock())
    names = sorted(p.name for p in (tmp_path / "run" / "checkpoints").iterdir())
    assert names == ["update_000004.ckpt", "update_000008.ckpt"]


def test_final_checkpoint_loads_with_configured_shapes(tmp_path):
    result = train(small_config(tmp_path), clock=counter_clock())
    policy, adam = load_checkpoint(
        result.checkpoint_path, (9, 64, 128, 164, 128, 64, 2), (9, 64, 128, 164, 128, 64, 1)
    )
    assert adam.step == 10 * 16
    assert policy.flat.tobytes() == result.policy.flat.tobytes()


def test_unknown_task_lists_registered():
    with pytest.raises(ConfigError) as info:
        RunConfig(task="cartpole").validate()
    assert "'task'" in str(info.value) and "ppmc" in str(info.value)


def test_config_rejects_unknown_keys(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"tsak": "ppmc"})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"train": {"learning_rte": 1e-3}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"train": {"gamma": 2.0}})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_config_file_round_trip(tmp_path):
    cfg = RunConfig.from_dict(
        {
            "seed": 11,
            "layer_sizes": [16, 16],
            "train": {"total_timesteps": 512},
            "task_config": {"time_limit": 50, "reward": {"c_turn": 0.5}},
            "rover": {"track_width": 0.4},
        }
    )
    assert cfg.task_config.reward.c_turn == 0.5
    assert cfg.rover.track_width == 0.4
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert load_config(path) == cfg


def test_evaluate_zero_episodes():
    env = make_env(RunConfig())
    pol = PolicyParams.initialize(9, 2, rng=np.random.default_rng(0))
    report = evaluate_policy(pol, env, 0)
    assert report.episodes == 0 and math.isnan(report.success_rate)


def test_untrained_policy_rarely_succeeds():
    env = make_env(RunConfig())
    pol = PolicyParams.initialize(9, 2, rng=np.random.default_rng(0))
    report = evaluate_policy(pol, env, 100, seed=0)
    assert report.episodes == 100
    assert report.success_rate <= 0.2
    assert report.double_success_rate <= report.success_rate


def test_evaluate_checkpoint_and_trajectory(tmp_path):
    pol = PolicyParams.initialize(9, 2, rng=np.random.default_rng(0))
    ckpt = save_checkpoint(pol, None, tmp_path / "p.ckpt")
    cfg = RunConfig.from_dict({"task_config": {"time_limit": 20}})
    traj = tmp_path / "traj.csv"
    report = evaluate(ckpt, 3, seed=5, config=cfg, trajectory_path=traj)
    rows = read_csv(traj)
    assert rows[0][:6] == ["episode", "step", "reward", "done", "action_left", "action_right"]
    assert len(rows) - 1 == 60
    assert report.rewards == pytest.approx(
        [sum(float(r[2]) for r in rows[1:] if r[0] == str(i)) for i in range(3)]
    )
    again = evaluate(ckpt, 3, seed=5, config=cfg)
    assert again.rewards == report.rewards


def test_evaluate_shape_mismatch(tmp_path):
    pol = PolicyParams.initialize(4, 2, hidden=(8,), rng=np.random.default_rng(0))
    ckpt = save_checkpoint(pol, None, tmp_path / "p.ckpt")
    with pytest.raises(ShapeMismatch):
        evaluate(ckpt, 1)


def test_cli_train_and_eval(tmp_path, capsys):
    out = tmp_path / "cli"
    assert main(["--timesteps", "1280", "--seed", "1", "--out", str(out)]) == EXIT_OK
    assert (out / "final.ckpt").exists()
    capsys.readouterr()
    code = main(["--eval", "--checkpoint", str(out / "final.ckpt"), "--episodes", "2", "--out", str(out)])
    assert code == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["episodes"] == 2


def test_cli_exit_codes(tmp_path):
    assert main(["--task", "nope"]) == EXIT_CONFIG
    assert main(["--timesteps", "0"]) == EXIT_CONFIG
    assert main(["--eval"]) == EXIT_CONFIG
    assert main(["--eval", "--checkpoint", str(tmp_path / "missing.ckpt")]) == EXIT_IO
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"RLSTAR00junk")
    assert main(["--eval", "--checkpoint", str(junk)]) == EXIT_IO
