"""Named configurations: the full-scale defaults and the reduced desk-scale scenarios."""

from __future__ import annotations

from .dqn import QNetworkConfig, TrainerConfig
from .env import EnvConfig
from .scene import TargetModel, sphere_model

# Reduced DQN task: one bright sphere drifting in the x-y plane, 32x32 RGBD input.
SANITY_SPHERE_RADIUS = 0.5
SANITY_DRIFT_STD = 0.15
SANITY_MAX_STEPS = 200

# Controller-isolation scenario: a small sphere keeps the frustum-average
# surface bias (about 2/3 of the radius) below the convergence tolerance.
PBVS_SPHERE_RADIUS = 0.1


def sanity_env_config(**overrides) -> EnvConfig:
    kw = dict(
        image_size=64,
        obs_size=32,
        channels="rgbd",
        frame_stack=2,
        max_steps=SANITY_MAX_STEPS,
        delayed_ending=10,
        planar_drift=True,
        target_speed_std=SANITY_DRIFT_STD,
        angular_rate_max=0.0,
    )
    kw.update(overrides)
    return EnvConfig(**kw)


def sanity_network_config(env: EnvConfig | None = None) -> QNetworkConfig:
    env = env or sanity_env_config()
    return QNetworkConfig(
        input_shape=env.obs_shape,
        merge_filters=8,
        conv_filters=(16, 32, 32),
        fc_units=(256, 64),
        dropout=0.5,
    )


def sanity_trainer_config(**overrides) -> TrainerConfig:
    kw = dict(
        episodes=300,
        max_episode_len=SANITY_MAX_STEPS,
        target_update_interval=10,
        gamma=0.99,
        batch_size=32,
        learning_rate=1e-4,
        epsilon_decay_steps=15000,
        replay_capacity=50000,
        initial_buffer=1000,
        seed=0,
    )
    kw.update(overrides)
    return TrainerConfig(**kw)


def sanity_model() -> TargetModel:
    return sphere_model(SANITY_SPHERE_RADIUS, albedo=(1.0, 1.0, 1.0), model_id="bright_sphere")


def pbvs_model() -> TargetModel:
    return sphere_model(PBVS_SPHERE_RADIUS, albedo=(1.0, 1.0, 1.0), model_id="small_sphere")


def pbvs_env_config(control_mode: str = "velocity", **overrides) -> EnvConfig:
    kw = dict(control_mode=control_mode, max_steps=1000, angular_rate_max=0.0)
    kw.update(overrides)
    return EnvConfig(**kw)
