"""Fully connected tanh networks, a diagonal Gaussian policy head and Adam.

Everything is float64 numpy. Parameters of a whole actor-critic live in one
flat vector; the per-layer weight matrices and bias vectors are views into
it, so the optimizer and gradient clipping work on a single array while the
forward and backward passes see ordinary matrices.

Flat layout (also the checkpoint layout)::

    actor:  W0 (row-major, shape out x in), b0, W1, b1, ...
    log_std
    critic: W0, b0, W1, b1, ...
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CacheMismatch, DimensionMismatch, ShapeMismatch

LOG_2PI = math.log(2.0 * math.pi)

DEFAULT_HIDDEN = (64, 128, 164, 128, 64)


def mlp_size(layer_sizes) -> int:
    return sum(n_out * n_in + n_out for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]))


@dataclass
class MlpParams:
    layer_sizes: tuple
    weights: list
    biases: list

    @classmethod
    def from_flat(cls, layer_sizes, flat: np.ndarray) -> "MlpParams":
        """Build weight/bias views over ``flat``; no data is copied."""
        layer_sizes = tuple(int(n) for n in layer_sizes)
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise ValueError(f"invalid layer sizes {layer_sizes}")
        if flat.shape != (mlp_size(layer_sizes),):
            raise ShapeMismatch(f"need {mlp_size(layer_sizes)} parameters, got {flat.shape}")
        weights, biases, offset = [], [], 0
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            weights.append(flat[offset : offset + n_out * n_in].reshape(n_out, n_in))
            offset += n_out * n_in
            biases.append(flat[offset : offset + n_out])
            offset += n_out
        return cls(layer_sizes, weights, biases)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def arrays(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def init_mlp(layer_sizes, rng: np.random.Generator, out: np.ndarray | None = None) -> MlpParams:
    """Uniform(+-sqrt(1/fan_in)) weights, zero biases."""
    flat = np.zeros(mlp_size(layer_sizes)) if out is None else out
    params = MlpParams.from_flat(layer_sizes, flat)
    for w in params.weights:
        bound = math.sqrt(1.0 / w.shape[1])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    for b in params.biases:
        b[...] = 0.0
    return params


@dataclass
class ForwardCache:
    layer_sizes: tuple
    activations: list  # input to every layer, batched (N, n_in)
    squeeze: bool


def forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """tanh on every hidden layer, identity on the output layer.

    ``x`` is either one input vector or a batch of shape (N, n_in).
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.ndim != 2 or h.shape[1] != params.layer_sizes[0]:
        raise DimensionMismatch(f"expected input width {params.layer_sizes[0]}, got shape {x.shape}")
    activations = []
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        activations.append(h)
        h = h @ w.T + b
        if i < last:
            h = np.tanh(h)
    cache = ForwardCache(params.layer_sizes, activations, squeeze)
    return (h[0] if squeeze else h), cache


def backward(
    params: MlpParams,
    cache: ForwardCache,
    output_gradient: np.ndarray,
    out: MlpParams | None = None,
) -> tuple[MlpParams, np.ndarray]:
    """Reverse-mode gradients of a scalar given d(scalar)/d(output).

    Returns ``(param_grads, input_grad)``. Gradients are written into
    ``out`` when supplied (e.g. views over a flat gradient buffer).
    """
    if cache.layer_sizes != params.layer_sizes or len(cache.activations) != params.n_layers:
        raise CacheMismatch(
            f"cache was built for layers {cache.layer_sizes}, network has {params.layer_sizes}"
        )
    g = np.asarray(output_gradient, dtype=np.float64)
    if cache.squeeze:
        g = g[None, :]
    n_batch = cache.activations[0].shape[0]
    if g.shape != (n_batch, params.layer_sizes[-1]):
        raise DimensionMismatch(f"output gradient has shape {g.shape}, expected {(n_batch, params.layer_sizes[-1])}")
    if out is None:
        out = MlpParams.from_flat(params.layer_sizes, np.zeros(mlp_size(params.layer_sizes)))
    for i in range(params.n_layers - 1, -1, -1):
        a = cache.activations[i]
        np.matmul(g.T, a, out=out.weights[i])
        np.sum(g, axis=0, out=out.biases[i])
        g = g @ params.weights[i]
        if i > 0:
            # a is the tanh output of the previous layer
            g *= 1.0 - a * a
    return out, (g[0] if cache.squeeze else g)


def gaussian_logprob_entropy(mean, log_std, action) -> tuple:
    """Log-density of ``action`` under N(mean, exp(log_std)^2) and the entropy.

    Works on single vectors or on batches (last axis is the action axis);
    the entropy depends on ``log_std`` only.
    """
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    action = np.asarray(action, dtype=np.float64)
    if mean.shape[-1] != log_std.shape[-1] or action.shape != mean.shape:
        raise DimensionMismatch("mean, log_std and action dimensions disagree")
    z = (action - mean) / np.exp(log_std)
    logprob = np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)
    entropy = float(np.sum(0.5 + 0.5 * LOG_2PI + log_std))
    return logprob, entropy


class PolicyParams:
    """Actor MLP (action means), state-independent log std and critic MLP."""

    def __init__(self, actor_sizes, critic_sizes, flat: np.ndarray | None = None):
        actor_sizes = tuple(int(n) for n in actor_sizes)
        critic_sizes = tuple(int(n) for n in critic_sizes)
        if critic_sizes[-1] != 1:
            raise ShapeMismatch(f"critic must have one output, got {critic_sizes[-1]}")
        if actor_sizes[0] != critic_sizes[0]:
            raise ShapeMismatch("actor and critic must read the same observation width")
        self.actor_sizes = actor_sizes
        self.critic_sizes = critic_sizes
        n_actor = mlp_size(actor_sizes)
        act_dim = actor_sizes[-1]
        size = n_actor + act_dim + mlp_size(critic_sizes)
        if flat is None:
            flat = np.zeros(size)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (size,):
            raise ShapeMismatch(f"need {size} parameters, got {flat.shape}")
        self.flat = flat
        self.actor, self.log_std, self.critic = self.views(flat)

    @classmethod
    def initialize(cls, obs_dim, act_dim, hidden=DEFAULT_HIDDEN, rng=None, log_std=0.0) -> "PolicyParams":
        rng = rng if rng is not None else np.random.default_rng()
        hidden = tuple(hidden)
        policy = cls((obs_dim, *hidden, act_dim), (obs_dim, *hidden, 1))
        init_mlp(policy.actor_sizes, rng, out=policy.actor_flat)
        policy.log_std[...] = log_std
        init_mlp(policy.critic_sizes, rng, out=policy.critic_flat)
        return policy

    def views(self, flat: np.ndarray) -> tuple[MlpParams, np.ndarray, MlpParams]:
        """Split any vector laid out like ``self.flat`` into (actor, log_std, critic)."""
        n_actor = mlp_size(self.actor_sizes)
        act_dim = self.actor_sizes[-1]
        return (
            MlpParams.from_flat(self.actor_sizes, flat[:n_actor]),
            flat[n_actor : n_actor + act_dim],
            MlpParams.from_flat(self.critic_sizes, flat[n_actor + act_dim :]),
        )

    @property
    def actor_flat(self) -> np.ndarray:
        return self.flat[: mlp_size(self.actor_sizes)]

    @property
    def critic_flat(self) -> np.ndarray:
        return self.flat[mlp_size(self.actor_sizes) + self.act_dim :]

    @property
    def obs_dim(self) -> int:
        return self.actor_sizes[0]

    @property
    def act_dim(self) -> int:
        return self.actor_sizes[-1]

    @property
    def size(self) -> int:
        return self.flat.shape[0]

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.actor_sizes, self.critic_sizes, self.flat.copy())

    def mean(self, obs) -> np.ndarray:
        return forward(self.actor, obs)[0]

    def value(self, obs):
        v = forward(self.critic, obs)[0]
        return float(v[0]) if v.ndim == 1 else v[:, 0]

    def step(self, obs: np.ndarray, rng: np.random.Generator | None):
        """Action, log-prob and value for one observation.

        With ``rng=None`` the action is the policy mean (log-prob is then
        the density at the mean). This is the hot path during rollouts, so
        it skips the activation cache.
        """
        mean = _infer(self.actor, obs)
        value = _infer(self.critic, obs)[0]
        if rng is None:
            noise = np.zeros_like(mean)
            action = mean
        else:
            noise = rng.standard_normal(mean.shape[0])
            action = mean + np.exp(self.log_std) * noise
        logprob, _ = gaussian_logprob_entropy(mean, self.log_std, action)
        return action, float(logprob), float(value)


def _infer(params: MlpParams, x: np.ndarray) -> np.ndarray:
    h = x
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = w @ h + b
        if i < last:
            h = np.tanh(h)
    return h


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-5

    @classmethod
    def zeros(cls, size: int, **kwargs) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), **kwargs)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float):
    """One in-place Adam update of the flat ``params``.

    Bias correction is folded into the step size and epsilon is added to
    the uncorrected sqrt(v), as in the TensorFlow optimizer:
    ``params -= lr * sqrt(1 - b2^t) / (1 - b1^t) * m / (sqrt(v) + eps)``.
    """
    if params.shape != grads.shape or state.m.shape != params.shape or state.v.shape != params.shape:
        raise ShapeMismatch(
            f"params {params.shape}, grads {grads.shape}, moments {state.m.shape}/{state.v.shape}"
        )
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * (grads * grads)
    lr_t = lr * math.sqrt(1.0 - b2**state.step) / (1.0 - b1**state.step)
    params -= lr_t * state.m / (np.sqrt(state.v) + state.eps)
    return params, state
