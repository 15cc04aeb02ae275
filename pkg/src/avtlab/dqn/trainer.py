"""DQN training loop with experience replay and a periodically synchronized target network."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..env import TrackingEnv
from ..scene import TargetModel
from .checkpoint import load_checkpoint, save_checkpoint
from .network import Adam, QNetworkConfig, clip_by_global_norm, forward, init_params, loss_and_gradients
from .policy import epsilon_at, select_action, td_targets_from_values
from .replay import ReplayBuffer

log = logging.getLogger(__name__)

CURVE_FIELDS = ("episode", "length", "total_reward", "mean_q")


@dataclass
class TrainerConfig:
    episodes: int = 300
    max_episode_len: int = 1000
    target_update_interval: int = 10
    target_update_unit: str = "episodes"
    gamma: float = 0.99
    batch_size: int = 32
    learning_rate: float = 1e-4
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_decay_steps: int = 50000
    grad_clip: float = 10.0
    replay_capacity: int = 50000
    initial_buffer: int = 10000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.target_update_unit not in ("episodes", "steps"):
            raise ValueError("target_update_unit must be 'episodes' or 'steps'")
        if not 0.1 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ValueError("epsilon schedule must satisfy 0.1 <= end <= start <= 1")
        if self.episodes < 0 or self.batch_size < 1 or self.target_update_interval < 1:
            raise ValueError("episodes, batch_size and target_update_interval must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpisodeCurve:
    episode: int
    length: int
    total_reward: float
    mean_q: float


@dataclass
class TrainResult:
    params: dict
    network: QNetworkConfig
    curves: list[EpisodeCurve] = field(default_factory=list)
    gradient_steps: int = 0
    env_steps: int = 0


def write_curves(path, curves: Sequence[EpisodeCurve]):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CURVE_FIELDS)
        for c in curves:
            w.writerow([c.episode, c.length, repr(float(c.total_reward)), repr(float(c.mean_q))])


def read_curves(path) -> list[EpisodeCurve]:
    with open(path, newline="") as f:
        return [
            EpisodeCurve(int(r["episode"]), int(r["length"]), float(r["total_reward"]), float(r["mean_q"]))
            for r in csv.DictReader(f)
        ]


def train(
    env_factory: Callable[[TargetModel, int], TrackingEnv],
    config: TrainerConfig,
    network: QNetworkConfig,
    models: Sequence[TargetModel],
    checkpoint_path=None,
    curves_path=None,
    extra_config: dict | None = None,
) -> TrainResult:
    """Train a Q-network on ``models`` (sampled uniformly per episode).

    ``env_factory(model, seed)`` must build a position-step environment whose
    observation shape matches ``network.input_shape``. The checkpoint and
    curves are written on normal exit and on interruption.
    """
    if not models:
        raise ValueError("no training models")
    root = np.random.SeedSequence(config.seed)
    init_ss, act_ss, replay_ss, drop_ss, model_ss, env_ss = root.spawn(6)
    params = init_params(network, np.random.default_rng(init_ss))
    target = {k: v.copy() for k, v in params.items()}
    opt = Adam(params, lr=config.learning_rate)
    buffer = ReplayBuffer(config.replay_capacity, config.initial_buffer)
    act_rng = np.random.default_rng(act_ss)
    replay_rng = np.random.default_rng(replay_ss)
    drop_rng = np.random.default_rng(drop_ss)
    model_rng = np.random.default_rng(model_ss)
    env_seeds = env_ss.generate_state(max(config.episodes, 1), dtype=np.uint32)

    result = TrainResult(params=params, network=network)
    total_steps = 0

    def sync_target():
        for k in params:
            target[k][...] = params[k]

    def persist():
        if checkpoint_path is not None:
            cfg = {"network": network.to_dict(), "trainer": config.to_dict()}
            if extra_config:
                cfg.update(extra_config)
            save_checkpoint(checkpoint_path, params, cfg, rng_state=act_rng.bit_generator.state)
        if curves_path is not None:
            write_curves(curves_path, result.curves)

    try:
        for ep in range(config.episodes):
            model = models[int(model_rng.integers(len(models)))]
            env = env_factory(model, int(env_seeds[ep]))
            if env.config.control_mode != "position_step":
                raise ValueError("DQN training needs a position_step environment")
            obs = env.reset()
            ep_reward = 0.0
            q_sum = 0.0
            n = 0
            while True:
                q = forward(params, network, obs)
                q_sum += float(np.max(q))
                eps = epsilon_at(total_steps, config.epsilon_start, config.epsilon_end, config.epsilon_decay_steps)
                a = select_action(q, eps, act_rng)
                res = env.step(a)
                n += 1
                total_steps += 1
                ep_reward += res.reward
                buffer.push(obs, a, res.reward, res.observation, res.info["terminated"])
                obs = res.observation

                if buffer.ready:
                    s, acts, r, s2, d = buffer.sample(config.batch_size, replay_rng)
                    y = td_targets_from_values(forward(target, network, s2), r, d, config.gamma)
                    _, grads = loss_and_gradients(params, network, s, acts, y, dropout_rng=drop_rng)
                    grads, _ = clip_by_global_norm(grads, config.grad_clip)
                    opt.step(params, grads)
                    result.gradient_steps += 1
                    if config.target_update_unit == "steps" and result.gradient_steps % config.target_update_interval == 0:
                        sync_target()
                if res.done or n >= config.max_episode_len:
                    break
            if config.target_update_unit == "episodes" and (ep + 1) % config.target_update_interval == 0:
                sync_target()
            result.curves.append(EpisodeCurve(ep, env.length, ep_reward, q_sum / max(n, 1)))
            log.info(
                "episode %d model=%s length=%d reward=%.2f mean_q=%.3f eps=%.3f",
                ep,
                model.id,
                env.length,
                ep_reward,
                q_sum / max(n, 1),
                epsilon_at(total_steps, config.epsilon_start, config.epsilon_end, config.epsilon_decay_steps),
            )
    finally:
        result.env_steps = total_steps
        persist()
    return result


class DqnAgent:
    """Greedy (or epsilon-greedy) policy over a trained Q-network."""

    control_mode = "position_step"

    def __init__(self, params, network: QNetworkConfig, epsilon: float = 0.0, seed: int = 0):
        self.params = params
        self.network = network
        self.epsilon = epsilon
        self.rng = np.random.default_rng(seed)
        self.last_q = None

    @classmethod
    def from_checkpoint(cls, path, **kwargs) -> "DqnAgent":
        params, cfg, _ = load_checkpoint(path)
        return cls(params, QNetworkConfig(**cfg["network"]), **kwargs)

    def reset(self, env=None, seed=None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)

    def q_values(self, obs) -> np.ndarray:
        return forward(self.params, self.network, obs)

    def act(self, env, obs) -> int:
        self.last_q = self.q_values(obs)
        return select_action(self.last_q, self.epsilon, self.rng)
