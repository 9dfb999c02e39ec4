"""Rollout collection, GAE and the clipped-surrogate PPO update."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .env_api import Environment
from .errors import LengthMismatch, NonFiniteLoss
from .nn import LOG_2PI, AdamState, PolicyParams, adam_step, backward, forward


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    gamma: float = 0.9
    gae_lambda: float = 0.95
    entropy_coef: float = 0.01
    vf_coef: float = 0.5
    n_steps: int = 256
    n_epochs: int = 4
    n_minibatches: int = 4
    clip_range: float = 0.2
    max_grad_norm: float = 0.5
    total_timesteps: int = 1_000_000
    adv_eps: float = 1e-8
    adam_eps: float = 1e-5

    def __post_init__(self):
        problems = []
        if self.n_steps < 1 or self.n_epochs < 1 or self.n_minibatches < 1:
            problems.append("n_steps, n_epochs and n_minibatches must be positive")
        elif self.n_steps % self.n_minibatches:
            problems.append(f"n_steps={self.n_steps} is not divisible by n_minibatches={self.n_minibatches}")
        if not 0 < self.gamma <= 1:
            problems.append(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0 <= self.gae_lambda <= 1:
            problems.append(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
        if self.clip_range <= 0 or self.max_grad_norm <= 0 or self.learning_rate <= 0:
            problems.append("clip_range, max_grad_norm and learning_rate must be positive")
        if self.total_timesteps < 1:
            problems.append("total_timesteps must be positive")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def minibatch_size(self) -> int:
        return self.n_steps // self.n_minibatches

    @property
    def n_updates(self) -> int:
        return -(-self.total_timesteps // self.n_steps)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpisodeCarry:
    """Per-episode bookkeeping that survives across rollout boundaries."""

    obs: np.ndarray
    reward: float = 0.0
    length: int = 0
    first_waypoint_step: int | None = None


@dataclass
class RolloutBatch:
    observations: np.ndarray
    actions: np.ndarray
    logprobs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    bootstrap_value: float
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    carry: EpisodeCarry | None = None
    # one dict per episode finished during this rollout
    episodes: list = field(default_factory=list)

    def __len__(self):
        return self.rewards.shape[0]


def collect_rollout(
    env: Environment,
    policy: PolicyParams,
    n_steps: int,
    rng: np.random.Generator,
    carry: EpisodeCarry | None = None,
) -> RolloutBatch:
    """Run the stochastic policy for ``n_steps`` transitions.

    Episodes are reset automatically when they end. Pass the previous
    batch's ``carry`` to continue where it stopped; without one the
    environment is reset first.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if carry is None:
        carry = EpisodeCarry(env.reset())
    obs_dim, act_dim = policy.obs_dim, policy.act_dim
    observations = np.zeros((n_steps, obs_dim))
    actions = np.zeros((n_steps, act_dim))
    logprobs = np.zeros(n_steps)
    values = np.zeros(n_steps)
    rewards = np.zeros(n_steps)
    dones = np.zeros(n_steps, dtype=bool)
    episodes = []

    obs = carry.obs
    for t in range(n_steps):
        action, logp, value = policy.step(obs, rng)
        observations[t] = obs
        actions[t] = action
        logprobs[t] = logp
        values[t] = value
        result = env.step(action)
        rewards[t] = result.reward
        dones[t] = result.done
        carry.reward += result.reward
        carry.length += 1
        if carry.first_waypoint_step is None and result.info.get("goal_reached", 0.0) > 0:
            carry.first_waypoint_step = carry.length
        if result.done:
            episodes.append(
                {
                    "reward": carry.reward,
                    "length": carry.length,
                    "waypoints": result.info.get("waypoints_reached", 0.0),
                    "first_waypoint_step": carry.first_waypoint_step,
                }
            )
            obs = env.reset()
            carry.reward, carry.length, carry.first_waypoint_step = 0.0, 0, None
        else:
            obs = result.observation
    carry.obs = obs
    return RolloutBatch(
        observations, actions, logprobs, values, rewards, dones,
        bootstrap_value=policy.value(obs), carry=carry, episodes=episodes,
    )


def compute_gae(rewards, values, dones, bootstrap_value, gamma, lam):
    """Generalized advantage estimates and value targets.

    ``dones[t]`` marks that the episode ended with transition t, so neither
    the TD target nor the advantage recursion looks past it.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones)
    n = rewards.shape[0]
    if n < 1 or values.shape != (n,) or dones.shape != (n,):
        raise LengthMismatch(
            f"rewards, values and dones need one equal length >= 1, got {rewards.shape}, {values.shape}, {dones.shape}"
        )
    advantages = np.zeros(n)
    last = 0.0
    next_value = float(bootstrap_value)
    for t in range(n - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * nonterminal * next_value - values[t]
        last = delta + gamma * lam * nonterminal * last
        advantages[t] = last
        next_value = values[t]
    return advantages, advantages + values


def finish_batch(batch: RolloutBatch, cfg: TrainConfig) -> RolloutBatch:
    batch.advantages, batch.returns = compute_gae(
        batch.rewards, batch.values, batch.dones, batch.bootstrap_value, cfg.gamma, cfg.gae_lambda
    )
    return batch


def normalize_advantages(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    if adv.max() == adv.min():
        # the float mean can miss a constant by an ulp, which eps would amplify
        return np.zeros_like(adv)
    return (adv - adv.mean()) / (adv.std() + eps)


def clip_global_norm(grads, max_norm: float):
    """Rescale ``grads`` so their joint L2 norm is at most ``max_norm``.

    ``grads`` is a flat array or a list of arrays; the result has the same
    form. Returns ``(grads, norm_before_clipping)``.
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    arrays = [grads] if isinstance(grads, np.ndarray) else list(grads)
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in arrays))
    if norm > max_norm:
        scale = max_norm / norm
        arrays = [g * scale for g in arrays]
    return (arrays[0] if isinstance(grads, np.ndarray) else arrays), norm


@dataclass
class Minibatch:
    observations: np.ndarray
    actions: np.ndarray
    logprobs: np.ndarray
    values: np.ndarray
    advantages: np.ndarray  # already normalized
    returns: np.ndarray


def ppo_loss(policy: PolicyParams, mb: Minibatch, cfg: TrainConfig, grad: np.ndarray | None = None):
    """Total PPO loss for one minibatch and, optionally, its gradient.

    ``grad`` (laid out like ``policy.flat``) receives d(loss)/d(params)
    when given. Returns ``(loss, stats)``.
    """
    eps = cfg.clip_range
    n = mb.observations.shape[0]
    log_std = policy.log_std
    std = np.exp(log_std)

    mean, actor_cache = forward(policy.actor, mb.observations)
    z = (mb.actions - mean) / std
    logprob = np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=1)
    log_ratio = logprob - mb.logprobs
    ratio = np.exp(log_ratio)
    adv = mb.advantages
    surr_unclipped = ratio * adv
    surr_clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    policy_loss = -np.mean(np.minimum(surr_unclipped, surr_clipped))

    entropy = float(np.sum(0.5 + 0.5 * LOG_2PI + log_std))

    value_out, critic_cache = forward(policy.critic, mb.observations)
    value = value_out[:, 0]
    value_clipped = mb.values + np.clip(value - mb.values, -eps, eps)
    err_unclipped = (value - mb.returns) ** 2
    err_clipped = (value_clipped - mb.returns) ** 2
    value_loss = 0.5 * np.mean(np.maximum(err_unclipped, err_clipped))

    loss = policy_loss + cfg.vf_coef * value_loss - cfg.entropy_coef * entropy
    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": entropy,
        # (r - 1) - log r: nonnegative estimator of KL(old || new)
        "approx_kl": float(np.mean(np.expm1(log_ratio) - log_ratio)),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > eps)),
        "ratio": ratio,
        "surrogate_unclipped": float(-np.mean(surr_unclipped)),
        "surrogate_clipped": float(-np.mean(surr_clipped)),
    }
    if grad is None:
        return float(loss), stats

    actor_g, log_std_g, critic_g = policy.views(grad)
    # d policy_loss / d logprob; the clipped branch is flat in the parameters
    d_logprob = -(adv * ratio) * (surr_unclipped <= surr_clipped) / n
    d_mean = d_logprob[:, None] * z / std
    backward(policy.actor, actor_cache, d_mean, out=actor_g)
    log_std_g[...] = d_logprob @ (z * z - 1.0) - cfg.entropy_coef

    use_unclipped = err_unclipped >= err_clipped
    inside = np.abs(value - mb.values) < eps
    d_value = np.where(use_unclipped, value - mb.returns, (value_clipped - mb.returns) * inside)
    d_value *= cfg.vf_coef / n
    backward(policy.critic, critic_cache, d_value[:, None], out=critic_g)
    return float(loss), stats


METRIC_KEYS = ("policy_loss", "value_loss", "entropy", "approx_kl", "clip_frac")


def ppo_update(
    policy: PolicyParams,
    batch: RolloutBatch,
    cfg: TrainConfig,
    adam: AdamState,
    rng: np.random.Generator,
):
    """Several epochs of minibatch Adam steps on the clipped PPO objective.

    ``policy`` is updated in place. Returns ``(policy, metrics)`` with the
    metrics averaged over all minibatches.
    """
    if batch.advantages is None:
        raise ValueError("batch has no advantages; run finish_batch first")
    n = len(batch)
    size = n // cfg.n_minibatches
    advantages = normalize_advantages(batch.advantages, cfg.adv_eps)
    grad = np.zeros_like(policy.flat)
    totals = dict.fromkeys(METRIC_KEYS, 0.0)
    count = 0
    for _ in range(cfg.n_epochs):
        order = rng.permutation(n)
        for k in range(cfg.n_minibatches):
            idx = order[k * size : (k + 1) * size]
            mb = Minibatch(
                batch.observations[idx], batch.actions[idx], batch.logprobs[idx],
                batch.values[idx], advantages[idx], batch.returns[idx],
            )
            loss, stats = ppo_loss(policy, mb, cfg, grad)
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise NonFiniteLoss(
                    f"non-finite PPO loss {loss!r} in minibatch {count}",
                    dump={
                        "minibatch": count,
                        "stats": {k: stats[k] for k in METRIC_KEYS},
                        "log_std": policy.log_std.tolist(),
                        "max_abs_param": float(np.max(np.abs(policy.flat))),
                        "advantages": [float(advantages.min()), float(advantages.max())],
                    },
                )
            clipped, _ = clip_global_norm(grad, cfg.max_grad_norm)
            adam_step(policy.flat, clipped, adam, cfg.learning_rate)
            for key in METRIC_KEYS:
                totals[key] += stats[key]
            count += 1
    return policy, {key: totals[key] / count for key in METRIC_KEYS}
