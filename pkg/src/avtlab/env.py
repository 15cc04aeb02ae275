"""Episode orchestration: reset distributions, stepping, reward, visibility and termination."""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from . import dynamics as dyn
from .actions import action_vector
from .camera import CameraIntrinsics, intrinsics_from_fov, is_visible, sphere_bbox, BoundingBox
from .scene import DEFAULT_LIGHT, Frame, TargetModel, blur_frames, blur_length, euler_to_matrix, render

REWARD_VARIANTS = ("original", "dist_only", "soft_visible")
VISIBLE_REWARD = 1.0
INVISIBLE_PENALTY = -5.0
SOFT_INVISIBLE_PENALTY = -1.0


@dataclass
class EnvConfig:
    dt: float = 0.1
    r_star: tuple = (0.0, 0.0, 5.0)
    max_steps: int = 1000
    delayed_ending: int = 15
    control_mode: str = "position_step"
    obs_size: int = 64
    frame_stack: int = 3
    channels: str = "rgbd"
    z_max: float = 20.0
    reward_variant: str = "original"
    # Read the ablation rewards with the printed "+ r_dist" sign instead of a penalty.
    literal_ablation_sign: bool = False
    perturbations: dyn.PerturbationConfig = field(default_factory=dyn.PerturbationConfig)
    image_size: int = 256
    fov_deg: float = 60.0
    visibility: str = "com"
    min_visible_pixels: int = 1
    mount_offset: tuple = (0.0, 0.0, 0.0)
    step_size: float = dyn.STEP_SIZE
    init_xy_std: float = 1.0
    init_z_range: tuple = (2.0, 12.0)
    target_speed_std: float = 0.3
    planar_drift: bool = False
    angular_rate_max: float = 0.2
    light: tuple = DEFAULT_LIGHT
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.perturbations, dict):
            self.perturbations = dyn.PerturbationConfig(**self.perturbations)
        self.r_star = tuple(float(v) for v in self.r_star)
        self.mount_offset = tuple(float(v) for v in self.mount_offset)
        self.init_z_range = tuple(float(v) for v in self.init_z_range)
        self.light = tuple(float(v) for v in self.light)
        if not 10 <= self.delayed_ending <= 20:
            raise ValueError(f"delayed_ending must lie in [10, 20], got {self.delayed_ending}")
        if self.control_mode not in dyn.CONTROL_MODES:
            raise ValueError(f"unknown control mode {self.control_mode!r}")
        if self.channels not in ("color", "rgbd"):
            raise ValueError(f"channels must be 'color' or 'rgbd', got {self.channels!r}")
        if self.reward_variant not in REWARD_VARIANTS:
            raise ValueError(f"unknown reward variant {self.reward_variant!r}")
        if self.visibility not in ("com", "pixels"):
            raise ValueError(f"visibility must be 'com' or 'pixels', got {self.visibility!r}")
        if self.obs_size < 1 or self.image_size % self.obs_size:
            raise ValueError(f"obs_size {self.obs_size} must divide image_size {self.image_size}")
        if self.frame_stack < 1:
            raise ValueError("frame_stack must be >= 1")
        if self.max_steps < 1 or not self.dt > 0 or not self.z_max > 0:
            raise ValueError("max_steps, dt and z_max must be positive")

    @property
    def n_channels(self) -> int:
        return (4 if self.channels == "rgbd" else 3) * self.frame_stack

    @property
    def obs_shape(self) -> tuple[int, int, int]:
        return (self.obs_size, self.obs_size, self.n_channels)

    def intrinsics(self) -> CameraIntrinsics:
        a = math.radians(self.fov_deg)
        return intrinsics_from_fov(a, a, self.image_size, self.image_size)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


@dataclass(frozen=True)
class RewardBreakdown:
    r_vis: float
    r_dist: float


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    breakdown: RewardBreakdown
    done: bool
    info: dict[str, Any]


def reward(visible: bool, e: float, variant: str = "original", literal_sign: bool = False):
    """Per-step reward and its breakdown.

    ``original`` gives +1 in view, -5 out of view, minus the tracking error.
    ``dist_only`` drops the visibility term; ``soft_visible`` uses +/-1.
    With ``literal_sign`` the two ablations add the distance term instead.
    """
    if e < 0:
        raise ValueError("tracking error must be non-negative")
    if variant == "original":
        r_vis = VISIBLE_REWARD if visible else INVISIBLE_PENALTY
        return r_vis - e, RewardBreakdown(r_vis, e)
    if variant == "dist_only":
        r_vis = 0.0
    elif variant == "soft_visible":
        r_vis = VISIBLE_REWARD if visible else SOFT_INVISIBLE_PENALTY
    else:
        raise ValueError(f"unknown reward variant {variant!r}")
    r = r_vis + e if literal_sign else r_vis - e
    return r, RewardBreakdown(r_vis, e)


def downsample(img: np.ndarray, size: int) -> np.ndarray:
    """Area-average an (H, W[, C]) image to (size, size[, C])."""
    h, w = img.shape[:2]
    f = h // size
    if h != w or h % size:
        raise ValueError(f"cannot area-downsample {h}x{w} to {size}")
    if f == 1:
        return img
    shape = (size, f, size, f) + img.shape[2:]
    return img.reshape(shape).mean(axis=(1, 3))


def preprocess_frame(frame: Frame, config: EnvConfig) -> np.ndarray:
    """One frame as (obs, obs, 3 or 4) in [0, 1]; depth is divided by z_max."""
    color = downsample(frame.color, config.obs_size)
    if config.channels == "color":
        return np.clip(color, 0.0, 1.0)
    depth = downsample(np.minimum(frame.depth, config.z_max) / config.z_max, config.obs_size)
    return np.clip(np.concatenate([color, depth[..., None]], axis=-1), 0.0, 1.0)


def stack_frames(history, k: int) -> np.ndarray:
    """Channel-stack the last ``k`` preprocessed frames, newest last, padding with the oldest."""
    frames = list(history)[-k:]
    frames = [frames[0]] * (k - len(frames)) + frames
    return np.concatenate(frames, axis=-1).astype(np.float32)


class TrackingEnv:
    """One chaser, one target, one camera.

    Each instance owns three RNG streams spawned from its seed (initial state,
    actuator noise, time delay), so toggling a perturbation leaves the initial
    states of matched-seed episodes unchanged.
    """

    def __init__(self, config: EnvConfig, model: TargetModel, seed: int | None = None):
        self.config = config
        self.model = model
        self.intr = config.intrinsics()
        self.mount = dyn.mount_matrix(config.mount_offset)
        self._blur_n = blur_length(config.perturbations.blur_level)
        self.seed(config.seed if seed is None else seed)
        self.chaser: dyn.ChaserState | None = None
        self.target: dyn.TargetState | None = None
        self.done = True

    def seed(self, seed):
        ss = np.random.SeedSequence(seed)
        init_ss, noise_ss, delay_ss = ss.spawn(3)
        self._init_rng = np.random.default_rng(init_ss)
        self._noise_rng = np.random.default_rng(noise_ss)
        self._delay_rng = np.random.default_rng(delay_ss)

    # --- episode lifecycle -------------------------------------------------

    def sample_initial_target(self) -> dyn.TargetState:
        c = self.config
        rng = self._init_rng
        r_cam = np.array(
            [rng.normal(0.0, c.init_xy_std), rng.normal(0.0, c.init_xy_std), rng.uniform(*c.init_z_range)]
        )
        vel = rng.normal(0.0, c.target_speed_std, size=3)
        if c.planar_drift:
            vel[2] = 0.0
        attitude = dyn.wrap_angle(rng.uniform(-math.pi, math.pi, size=3))
        rate = rng.uniform(-c.angular_rate_max, c.angular_rate_max, size=3)
        r_body = self.mount[:3, :3] @ r_cam + self.mount[:3, 3]
        return dyn.TargetState(r_body, vel, attitude, rate)

    def reset(self, target: dyn.TargetState | None = None, chaser: dyn.ChaserState | None = None) -> np.ndarray:
        """Start an episode; ``target``/``chaser`` override the sampled initial state."""
        sampled = self.sample_initial_target()
        self.target = target if target is not None else sampled
        self.chaser = chaser if chaser is not None else dyn.ChaserState()
        self.time = 0.0
        self.steps = 0
        self.lost = 0
        self.done = False
        self._raw_history: deque = deque(maxlen=max(self._blur_n, 1))
        self._obs_history: deque = deque(maxlen=self.config.frame_stack)
        self._observe()
        self.visible = self._visible()
        return self.observation

    @property
    def length(self) -> int:
        """Episode length counting the reset observation."""
        return self.steps + 1

    def relative(self) -> tuple[np.ndarray, np.ndarray]:
        return dyn.relative_position(self.chaser, self.target, self.mount)

    def _visible(self) -> bool:
        _, r_cam = self.relative()
        if self.config.visibility == "com":
            return is_visible(self.intr, r_cam, self.config.z_max)
        return int(np.count_nonzero(self.frame.depth < self.config.z_max)) >= self.config.min_visible_pixels

    def _observe(self):
        _, r_cam = self.relative()
        clean = render(
            self.intr,
            self.model,
            r_cam,
            euler_to_matrix(self.target.attitude),
            light=self.config.light,
            z_max=self.config.z_max,
            timestamp=self.time,
        )
        self._raw_history.appendleft(clean)
        self.frame = blur_frames(list(self._raw_history), self._blur_n)
        self._obs_history.append(preprocess_frame(self.frame, self.config))
        self.observation = stack_frames(self._obs_history, self.config.frame_stack)

    def _apply_command(self, action, dt):
        c = self.config
        p = c.perturbations
        noise = dyn.sample_actuator_noise(self._noise_rng, p.actuator_noise)
        if isinstance(action, dyn.ControlCommand):
            mode, vec = action.mode, action.vector
            if mode != c.control_mode:
                raise ValueError(f"command mode {mode!r} does not match env mode {c.control_mode!r}")
        elif c.control_mode == "position_step" and np.ndim(action) == 0:
            vec = action_vector(int(action))
        else:
            vec = np.asarray(action, dtype=float)
        if c.control_mode == "force":
            self.chaser = dyn.step_chaser_force(self.chaser, vec, dt, noise)
        elif c.control_mode == "velocity":
            self.chaser = dyn.step_chaser_velocity(self.chaser, vec, dt, noise)
        else:
            self.chaser = dyn.step_chaser_position(self.chaser, vec, c.step_size, noise)

    def step(self, action) -> StepResult:
        if self.done:
            raise RuntimeError("episode is finished; call reset()")
        c = self.config
        dt = dyn.sample_time_delay(self._delay_rng, c.perturbations.time_delay, c.dt)
        self._apply_command(action, dt)
        self.target = dyn.step_target(self.target, dt)
        self.time += dt
        self.steps += 1
        self._observe()

        r_body, r_cam = self.relative()
        self.visible = self._visible()
        e = dyn.tracking_error(r_body, c.r_star)
        r, breakdown = reward(self.visible, e, c.reward_variant, c.literal_ablation_sign)
        self.lost = 0 if self.visible else self.lost + 1
        terminated = self.lost >= c.delayed_ending
        truncated = self.steps >= c.max_steps
        self.done = terminated or truncated
        info = {
            "step": self.steps,
            "length": self.length,
            "visible": self.visible,
            "e": e,
            "r_body": r_body,
            "r_cam": r_cam,
            "chaser_position": self.chaser.position.copy(),
            "dt": dt,
            "terminated": terminated,
            "truncated": truncated and not terminated,
        }
        return StepResult(self.observation, float(r), breakdown, self.done, info)

    # --- helpers for agents ------------------------------------------------

    def ground_truth_bbox(self) -> BoundingBox | None:
        """Image box of the target's bounding sphere, clipped to the image."""
        _, r_cam = self.relative()
        bb = sphere_bbox(self.intr, r_cam, self.model.bounding_radius)
        if bb is None or not bb.intersects_image(self.intr.width, self.intr.height):
            return None
        return bb.clipped(self.intr.width, self.intr.height)


LOG_FIELDS = (
    "step",
    "action",
    "reward",
    "r_vis",
    "r_dist",
    "e",
    "visible",
    "r_body_x",
    "r_body_y",
    "r_body_z",
    "chaser_x",
    "chaser_y",
    "chaser_z",
)


def format_action(action) -> str:
    if isinstance(action, dyn.ControlCommand):
        action = action.vector
    if np.ndim(action) == 0:
        return str(int(action))
    return ";".join(repr(float(v)) for v in np.asarray(action).ravel())


def step_record(result: StepResult, action) -> dict:
    info = result.info
    rb = info["r_body"]
    cp = info["chaser_position"]
    return {
        "step": info["step"],
        "action": format_action(action),
        "reward": result.reward,
        "r_vis": result.breakdown.r_vis,
        "r_dist": result.breakdown.r_dist,
        "e": info["e"],
        "visible": int(info["visible"]),
        "r_body_x": float(rb[0]),
        "r_body_y": float(rb[1]),
        "r_body_z": float(rb[2]),
        "chaser_x": float(cp[0]),
        "chaser_y": float(cp[1]),
        "chaser_z": float(cp[2]),
    }


def write_step_log(path, records, extra_fields=()):
    """Comma-separated per-step log. Floats use ``repr`` so values round-trip exactly."""
    fields = list(LOG_FIELDS) + [f for f in extra_fields if f not in LOG_FIELDS]
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for rec in records:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in rec.items()})


def read_step_log(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
