"""Environment contract shared by tasks, the PPO trainer and the socket bridge.

An environment is driven synchronously by its caller::

    env = make("ppmc")
    obs = env.reset(seed=7)
    result = env.step(np.array([0.5, 0.5]))
    result.observation, result.reward, result.done, result.info
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import UnknownTask


def _as_bounds(low, high, dim):
    low = np.asarray(low, dtype=np.float64).reshape(-1)
    high = np.asarray(high, dtype=np.float64).reshape(-1)
    if dim <= 0:
        raise ValueError(f"dim must be positive, got {dim}")
    if low.shape != (dim,) or high.shape != (dim,):
        raise ValueError(f"bounds must have length {dim}, got {low.shape[0]} and {high.shape[0]}")
    if not np.all(low < high):
        raise ValueError("every low bound must be strictly below its high bound")
    low.setflags(write=False)
    high.setflags(write=False)
    return low, high


@dataclass(frozen=True)
class ActionSpec:
    dim: int
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        low, high = _as_bounds(self.low, self.high, self.dim)
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    def clamp(self, action: np.ndarray) -> tuple[np.ndarray, int]:
        """Clamp ``action`` into bounds; also return how many entries moved."""
        clamped = np.minimum(np.maximum(action, self.low), self.high)
        return clamped, int(np.count_nonzero(clamped != action))


@dataclass(frozen=True)
class ObservationSpec:
    dim: int
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        low, high = _as_bounds(self.low, self.high, self.dim)
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    def contains(self, obs: np.ndarray) -> bool:
        obs = np.asarray(obs)
        return obs.shape == (self.dim,) and bool(np.all((obs >= self.low) & (obs <= self.high)))


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict[str, float] = field(default_factory=dict)


class Environment(ABC):
    """Base class every task/simulator pairing implements.

    One instance is driven by one thread at a time.
    """

    action_spec: ActionSpec
    observation_spec: ObservationSpec

    @abstractmethod
    def reset(self, seed: int | None = None) -> np.ndarray:
        """Start a new episode and return its first observation.

        A seed reseeds the environment's random stream; without one the
        stream simply continues.
        """

    @abstractmethod
    def step(self, action) -> StepResult:
        """Advance one control step.

        Raises ``ActionDimensionMismatch`` for a wrongly sized action and
        ``EpisodeFinished`` if the episode is already done.
        """

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


_REGISTRY: dict[str, Callable[..., Environment]] = {}


def register(name: str, factory: Callable[..., Environment]) -> None:
    if name in _REGISTRY:
        raise ValueError(f"task {name!r} is already registered")
    _REGISTRY[name] = factory


def registered() -> list[str]:
    return sorted(_REGISTRY)


def make(name: str, **kwargs) -> Environment:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise UnknownTask(
            f"unknown task {name!r}; registered tasks: {', '.join(registered()) or '(none)'}"
        ) from None
    return factory(**kwargs)
