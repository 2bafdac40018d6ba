"""UAV relay fleet simulator with DQN trajectory and schedule learning."""

from .agents import (
    EpsilonSchedule,
    QNetwork,
    ReplayBuffer,
    TrainConfig,
    greedy_policy,
    random_walk,
    select_action,
    train,
)
from .config import ExperimentConfig, load_config_file, load_config_text
from .env_core import (
    DeviceState,
    StepOutcome,
    UavAction,
    UavRelayEnv,
    UavState,
    WorldState,
    decode_joint,
    encode_joint,
)
from .kernels import active_backend
from .oracle import TinyInstance, exhaustive_best_return, finite_horizon_dp, rollout
from .params import EnergyParams, GridSpec, RadioParams, coverage_radius, rotor_power

__version__ = "0.1.0"

__all__ = [
    "EpsilonSchedule", "QNetwork", "ReplayBuffer", "TrainConfig",
    "greedy_policy", "random_walk", "select_action", "train",
    "ExperimentConfig", "load_config_file", "load_config_text",
    "DeviceState", "StepOutcome", "UavAction", "UavRelayEnv", "UavState",
    "WorldState", "decode_joint", "encode_joint",
    "active_backend",
    "TinyInstance", "exhaustive_best_return", "finite_horizon_dp", "rollout",
    "EnergyParams", "GridSpec", "RadioParams", "coverage_radius", "rotor_power",
    "__version__",
]
