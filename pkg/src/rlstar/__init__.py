"""PPO training of a skid-steer rover on waypoint navigation, in plain numpy."""

from . import ppmc  # noqa: F401  (registers the "ppmc" task)
from .env_api import ActionSpec, Environment, ObservationSpec, StepResult, make, register, registered
from .nn import PolicyParams
from .ppmc import PPMCEnv, TaskConfig
from .ppo import TrainConfig
from .rover import RoverParams, RoverState
from .runner import RunConfig, evaluate, train

__all__ = [
    "ActionSpec",
    "Environment",
    "ObservationSpec",
    "PPMCEnv",
    "PolicyParams",
    "RoverParams",
    "RoverState",
    "RunConfig",
    "StepResult",
    "TaskConfig",
    "TrainConfig",
    "evaluate",
    "make",
    "register",
    "registered",
    "train",
]
