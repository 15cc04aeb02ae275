"""Position-based visual servoing baseline.

2D template tracking on the color image, frustum-average 3D estimation on the
depth map, and a per-axis PID law driving the chaser in force or velocity mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import correlate

from .camera import BoundingBox, CameraIntrinsics, DEFAULT_Z_MAX, frustum_average, frustum_crop
from .dynamics import CHASER_MASS, FORCE_LIMIT, VELOCITY_LIMIT, ControlCommand
from .scene import Frame

_LUMA = np.array([0.299, 0.587, 0.114])
_VAR_EPS = 1e-12


def to_gray(color: np.ndarray) -> np.ndarray:
    return np.asarray(color, dtype=float) @ _LUMA


def _pixel_box(bbox: BoundingBox, width: int, height: int) -> tuple[int, int, int, int]:
    if not bbox.intersects_image(width, height):
        raise ValueError(f"bounding box {bbox} lies outside the {width}x{height} image")
    x0 = max(int(math.floor(bbox.x)), 0)
    y0 = max(int(math.floor(bbox.y)), 0)
    x1 = min(int(math.ceil(bbox.x + bbox.w)), width)
    y1 = min(int(math.ceil(bbox.y + bbox.h)), height)
    return x0, y0, max(x1 - x0, 1), max(y1 - y0, 1)


def ncc_map(image: np.ndarray, template: np.ndarray) -> np.ndarray:
    """Normalized cross-correlation of ``template`` at every valid offset in ``image``.

    Output has shape ``(H - th + 1, W - tw + 1)`` with values in [-1, 1];
    windows or templates with zero variance score 0.
    """
    image = np.asarray(image, dtype=float)
    t = np.asarray(template, dtype=float)
    th, tw = t.shape
    n = t.size
    # remove the global mean first: makes the window statistics insensitive to intensity offsets
    image = image - image.mean()
    t0 = t - t.mean()
    t_ss = float(np.sum(t0 * t0))
    num = correlate(image, t0, mode="valid", method="direct" if n * image.size < 4e6 else "fft")

    def box_sum(a):
        c = np.pad(a.cumsum(0).cumsum(1), ((1, 0), (1, 0)))
        return c[th:, tw:] - c[:-th, tw:] - c[th:, :-tw] + c[:-th, :-tw]

    s1 = box_sum(image)
    s2 = box_sum(image * image)
    var = np.maximum(s2 - s1 * s1 / n, 0.0)
    den = np.sqrt(var * t_ss)
    out = np.zeros_like(num)
    ok = (den > _VAR_EPS) & (var > _VAR_EPS * n) & (t_ss > _VAR_EPS)
    out[ok] = num[ok] / den[ok]
    return np.clip(out, -1.0, 1.0)


class TemplateTracker:
    """Grayscale NCC template tracker with a conservative running template update."""

    def __init__(
        self,
        frame: Frame,
        bbox: BoundingBox,
        search_margin: int = 32,
        update_rate: float = 0.05,
        min_score: float = 0.4,
    ):
        if not 0.0 <= update_rate <= 1.0:
            raise ValueError("update_rate must lie in [0, 1]")
        h, w = frame.color.shape[:2]
        x, y, bw, bh = _pixel_box(bbox, w, h)
        gray = to_gray(frame.color)
        self.template = gray[y : y + bh, x : x + bw].copy()
        self.bbox = BoundingBox(float(x), float(y), float(bw), float(bh))
        self.search_margin = int(search_margin)
        self.update_rate = float(update_rate)
        self.min_score = float(min_score)
        self.score = 1.0

    def update(self, frame: Frame) -> tuple[BoundingBox, float]:
        """Locate the template near the previous box; returns ``(bbox, score)``.

        On a low score (below ``min_score``) the previous box is kept and the
        template is not updated.
        """
        gray = to_gray(frame.color)
        h, w = gray.shape
        th, tw = self.template.shape
        x, y = int(self.bbox.x), int(self.bbox.y)
        m = self.search_margin
        sx0, sy0 = max(x - m, 0), max(y - m, 0)
        sx1, sy1 = min(x + m + tw, w), min(y + m + th, h)
        region = gray[sy0:sy1, sx0:sx1]
        if region.shape[0] < th or region.shape[1] < tw:
            self.score = 0.0
            return self.bbox, self.score
        scores = ncc_map(region, self.template)
        iy, ix = np.unravel_index(int(np.argmax(scores)), scores.shape)
        self.score = float(scores[iy, ix])
        if self.score >= self.min_score:
            nx, ny = sx0 + ix, sy0 + iy
            self.bbox = BoundingBox(float(nx), float(ny), float(tw), float(th))
            patch = gray[ny : ny + th, nx : nx + tw]
            self.template = (1.0 - self.update_rate) * self.template + self.update_rate * patch
        return self.bbox, self.score

    @property
    def confident(self) -> bool:
        return self.score >= self.min_score


def tracker_init(frame: Frame, bbox: BoundingBox, **kwargs) -> TemplateTracker:
    return TemplateTracker(frame, bbox, **kwargs)


def tracker_update(tracker: TemplateTracker, frame: Frame) -> tuple[BoundingBox, float]:
    return tracker.update(frame)


def estimate_3d(
    frame: Frame,
    bbox: BoundingBox | None,
    intr: CameraIntrinsics,
    previous=None,
    z_max: float = DEFAULT_Z_MAX,
):
    """Frustum-average position of the target in the camera frame.

    Returns ``(estimate, held)``. When the box is missing or its frustum holds
    no valid depth, ``previous`` is returned with ``held=True``.
    """
    if bbox is not None and bbox.intersects_image(intr.width, intr.height):
        cloud = frustum_crop(intr, frame.depth, bbox, z_max)
        if len(cloud):
            return frustum_average(cloud), False
    return (None if previous is None else np.asarray(previous, dtype=float)), True


class PidController:
    """Per-axis PID with rectangle-rule integral, clamped output and conditional-integration anti-windup."""

    def __init__(self, kp, ki, kd, limit: float):
        gains = [np.broadcast_to(np.asarray(g, dtype=float), (3,)).copy() for g in (kp, ki, kd)]
        for g in gains:
            if np.any(g < 0) or not np.all(np.isfinite(g)):
                raise ValueError("PID gains must be finite and non-negative")
            g.setflags(write=False)
        self._kp, self._ki, self._kd = gains
        self.limit = float(limit)
        self.reset()

    kp = property(lambda self: self._kp)
    ki = property(lambda self: self._ki)
    kd = property(lambda self: self._kd)

    def reset(self):
        self.integral = np.zeros(3)
        self.prev_error = None

    def __call__(self, error, dt: float) -> np.ndarray:
        if not dt > 0:
            raise ValueError("dt must be positive")
        e = np.asarray(error, dtype=float).reshape(3)
        deriv = np.zeros(3) if self.prev_error is None else (e - self.prev_error) / dt
        candidate = self.integral + e * dt
        raw = self._kp * e + self._ki * candidate + self._kd * deriv
        saturated = np.abs(raw) > self.limit
        self.integral = np.where(saturated, self.integral, candidate)
        u = self._kp * e + self._ki * self.integral + self._kd * deriv
        self.prev_error = e
        return np.clip(u, -self.limit, self.limit)


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float
    kd: float
    limit: float


def default_gains(control_mode: str, mass: float = CHASER_MASS) -> PidGains:
    """Fixed rule-based gains (no per-scenario tuning).

    Force mode places both closed-loop poles of the double integrator at
    ``-sqrt(kp/m)`` (critical damping) with ``kp = m/4``.
    """
    if control_mode == "force":
        kp = mass / 4.0
        return PidGains(kp, 0.5, 2.0 * math.sqrt(kp * mass), FORCE_LIMIT)
    if control_mode == "velocity":
        return PidGains(0.8, 0.05, 0.0, VELOCITY_LIMIT)
    raise ValueError(f"PBVS supports force or velocity control, not {control_mode!r}")


def pid_control(pid: PidController, e_vec, dt: float, mode: str) -> ControlCommand:
    return ControlCommand(mode, pid(e_vec, dt))


class PbvsAgent:
    """Track, estimate, transform to the body frame, and run the PID law.

    With ``oracle=True`` the tracker is replaced by the ground-truth box of
    the target's bounding sphere, isolating the controller from tracking errors.
    """

    def __init__(
        self,
        control_mode: str = "velocity",
        oracle: bool = False,
        gains: PidGains | None = None,
        search_margin: int = 32,
        update_rate: float = 0.05,
        min_score: float = 0.4,
    ):
        self.control_mode = control_mode
        self.oracle = oracle
        self.gains = gains or default_gains(control_mode)
        self.tracker_kwargs = dict(search_margin=search_margin, update_rate=update_rate, min_score=min_score)
        self.pid = PidController(self.gains.kp, self.gains.ki, self.gains.kd, self.gains.limit)
        self.tracker: TemplateTracker | None = None
        self.estimate = None
        self.last = {}

    def reset(self, env, seed=None):
        self.pid.reset()
        self.estimate = None
        self.tracker = None
        self.last = {}
        if not self.oracle:
            bbox = env.ground_truth_bbox()
            if bbox is not None:
                self.tracker = TemplateTracker(env.frame, bbox, **self.tracker_kwargs)

    def _locate(self, env):
        if self.oracle:
            return env.ground_truth_bbox(), 1.0
        if self.tracker is None:
            return None, 0.0
        bbox, score = self.tracker.update(env.frame)
        return (bbox if self.tracker.confident else None), score

    def act(self, env, obs=None) -> ControlCommand:
        bbox, score = self._locate(env)
        est, held = estimate_3d(env.frame, bbox, env.intr, self.estimate, env.config.z_max)
        self.estimate = est
        self.last = {"score": score, "held": int(held)}
        if bbox is not None:
            self.last.update(bbox_x=bbox.x, bbox_y=bbox.y, bbox_w=bbox.w, bbox_h=bbox.h)
        if est is None:
            return ControlCommand(self.control_mode, np.zeros(3))
        self.last.update(est_x=float(est[0]), est_y=float(est[1]), est_z=float(est[2]))
        r_body = env.mount[:3, :3] @ est + env.mount[:3, 3]
        e_vec = r_body - np.asarray(env.config.r_star)
        return pid_control(self.pid, e_vec, env.config.dt, self.control_mode)

    log_fields = ("score", "held", "bbox_x", "bbox_y", "bbox_w", "bbox_h", "est_x", "est_y", "est_z")
