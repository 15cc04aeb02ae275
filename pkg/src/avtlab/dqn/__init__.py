"""Deep Q-learning tracker: network, replay, policy, training and checkpoints."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .network import QNetworkConfig, forward, init_params, loss_and_gradients
from .policy import action_to_command, epsilon_at, select_action, td_targets, td_targets_from_values
from .replay import ReplayBuffer, Transition, WarmupError
from .trainer import DqnAgent, EpisodeCurve, TrainerConfig, TrainResult, read_curves, train, write_curves

__all__ = [
    "CheckpointError",
    "DqnAgent",
    "EpisodeCurve",
    "QNetworkConfig",
    "ReplayBuffer",
    "TrainResult",
    "TrainerConfig",
    "Transition",
    "WarmupError",
    "action_to_command",
    "epsilon_at",
    "forward",
    "init_params",
    "load_checkpoint",
    "loss_and_gradients",
    "read_curves",
    "save_checkpoint",
    "select_action",
    "td_targets",
    "td_targets_from_values",
    "train",
    "write_curves",
]
