"""Translational chaser dynamics, target kinematics and actuator/timing perturbations.

The chaser carries no attitude, so the body frame is axis-aligned with the
reference frame and the camera frame (x right, y down, z boresight).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

CHASER_MASS = 113.9  # kg
FORCE_LIMIT = 50.0  # N, per axis
VELOCITY_LIMIT = 5.0  # m/s, per axis
STEP_SIZE = 0.5  # m per discrete position step
NOMINAL_DT = 0.1  # s
MAX_DELAY = 0.1  # s
NOISE_STD = 0.3
R_STAR = (0.0, 0.0, 5.0)

CONTROL_MODES = ("force", "velocity", "position_step")


def _vec(x, name="vector") -> np.ndarray:
    a = np.asarray(x, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite {name}: {a}")
    return a


@dataclass(frozen=True)
class ChaserState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mass: float = CHASER_MASS

    def __post_init__(self):
        object.__setattr__(self, "position", _vec(self.position, "position"))
        object.__setattr__(self, "velocity", _vec(self.velocity, "velocity"))
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ValueError(f"mass must be positive, got {self.mass}")


@dataclass(frozen=True)
class TargetState:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    attitude: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_rate: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("position", "velocity", "attitude", "angular_rate"):
            object.__setattr__(self, name, _vec(getattr(self, name), name))


@dataclass(frozen=True)
class ControlCommand:
    mode: str
    vector: np.ndarray

    def __post_init__(self):
        if self.mode not in CONTROL_MODES:
            raise ValueError(f"unknown control mode {self.mode!r}")
        v = _vec(self.vector, "command")
        if self.mode == "position_step" and not np.all(np.isin(v, (-1.0, 0.0, 1.0))):
            raise ValueError(f"position steps must be in {{-1, 0, 1}}, got {v}")
        object.__setattr__(self, "vector", v)


@dataclass(frozen=True)
class PerturbationConfig:
    actuator_noise: bool = False
    time_delay: bool = False
    blur_level: int = 0

    def __post_init__(self):
        if self.blur_level not in (0, 1, 2, 3, 4):
            raise ValueError(f"blur_level must be in 0..4, got {self.blur_level}")

    @property
    def label(self) -> str:
        parts = []
        if self.actuator_noise:
            parts.append("noise")
        if self.time_delay:
            parts.append("delay")
        if self.blur_level:
            parts.append(f"blur{self.blur_level}")
        return "+".join(parts) or "clean"


def clamp_inf(u, limit: float) -> np.ndarray:
    """Component-wise clamp to ``[-limit, limit]``."""
    return np.clip(np.asarray(u, dtype=float), -limit, limit)


def step_chaser_force(state: ChaserState, u, dt: float, noise: float = 1.0) -> ChaserState:
    """Semi-implicit Euler under a bounded thrust: velocity first, then position."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    applied = clamp_inf(noise * _vec(u, "force"), FORCE_LIMIT)
    v = state.velocity + applied / state.mass * dt
    x = state.position + v * dt
    return replace(state, position=x, velocity=v)


def step_chaser_velocity(state: ChaserState, u_prime, dt: float, noise: float = 1.0) -> ChaserState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    v = clamp_inf(noise * _vec(u_prime, "velocity command"), VELOCITY_LIMIT)
    return replace(state, position=state.position + v * dt, velocity=v)


def step_chaser_position(
    state: ChaserState, step, step_size: float = STEP_SIZE, noise: float = 1.0
) -> ChaserState:
    """Discrete translation by ``step`` in {-1, 0, 1}^3 body-frame steps.

    The body-to-reference rotation is the identity because attitude is not
    controlled; velocity is left untouched in this mode.
    """
    step = _vec(step, "step")
    if not np.all(np.isin(step, (-1.0, 0.0, 1.0))):
        raise ValueError(f"step components must be in {{-1, 0, 1}}, got {step}")
    return replace(state, position=state.position + noise * step_size * step)


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + math.pi, 2 * math.pi) - math.pi
    return np.where(w == -math.pi, math.pi, w)


def step_target(state: TargetState, dt: float) -> TargetState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    return replace(
        state,
        position=state.position + state.velocity * dt,
        attitude=wrap_angle(state.attitude + state.angular_rate * dt),
    )


def sample_actuator_noise(rng: np.random.Generator, enabled: bool = True) -> float:
    if not enabled:
        return 1.0
    return float(rng.normal(1.0, NOISE_STD))


def sample_time_delay(rng: np.random.Generator, enabled: bool = True, dt: float = NOMINAL_DT) -> float:
    if not enabled:
        return dt
    return dt + float(rng.uniform(0.0, MAX_DELAY))


def mount_matrix(translation=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Homogeneous camera-to-body transform with axis-aligned rotation."""
    m = np.eye(4)
    m[:3, 3] = _vec(translation, "mount translation")
    return m


def relative_position(chaser: ChaserState, target: TargetState, mount=None) -> tuple[np.ndarray, np.ndarray]:
    """Target position in the chaser body frame and in the camera frame.

    Returns ``(r_body, r_cam)`` with ``r_body = mount @ r_cam``.
    """
    mount = np.eye(4) if mount is None else np.asarray(mount, dtype=float)
    r_body = target.position - chaser.position
    rot, t = mount[:3, :3], mount[:3, 3]
    r_cam = rot.T @ (r_body - t)
    return r_body, r_cam


def tracking_error(r_body, r_star=R_STAR) -> float:
    return float(np.linalg.norm(np.asarray(r_body, dtype=float) - np.asarray(r_star, dtype=float)))
