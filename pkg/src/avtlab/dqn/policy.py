"""TD targets, epsilon-greedy selection and the exploration schedule."""

from __future__ import annotations

import numpy as np

from ..actions import ACTION_TABLE, N_ACTIONS, action_vector
from ..dynamics import ControlCommand
from .network import QNetworkConfig, forward


def td_targets_from_values(q_next, rewards, dones, gamma: float) -> np.ndarray:
    """``r + gamma * max_a' q_next`` for non-terminal samples, ``r`` otherwise."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    q_next = np.asarray(q_next, dtype=float)
    rewards = np.asarray(rewards, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    return rewards + gamma * np.where(dones, 0.0, q_next.max(axis=1))


def td_targets(batch, target_params, config: QNetworkConfig, gamma: float) -> np.ndarray:
    """TD targets for a ``(s, a, r, s_next, done)`` batch using the frozen target network."""
    _, _, r, s_next, done = batch
    return td_targets_from_values(forward(target_params, config, s_next), r, done, gamma)


def epsilon_at(step: int, start: float = 1.0, end: float = 0.1, decay_steps: int = 50000) -> float:
    """Linear decay from ``start`` to ``end`` over ``decay_steps``, constant afterwards."""
    if decay_steps <= 0 or step >= decay_steps:
        return end
    return start + (end - start) * (step / decay_steps)


def select_action(q, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over action values; greedy ties go to the lowest index.

    One uniform draw decides exploration on every call, so the RNG stream
    advances identically regardless of the outcome.
    """
    q = np.asarray(q)
    explore = rng.random() < epsilon
    if explore:
        return int(rng.integers(len(q)))
    return int(np.argmax(q))


def action_to_command(index: int) -> ControlCommand:
    return ControlCommand("position_step", action_vector(index))


__all__ = [
    "ACTION_TABLE",
    "N_ACTIONS",
    "action_to_command",
    "epsilon_at",
    "select_action",
    "td_targets",
    "td_targets_from_values",
]
