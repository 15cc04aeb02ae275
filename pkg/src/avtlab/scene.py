"""Procedural target models, analytic ray-cast RGB-D rendering and motion blur."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .camera import DEFAULT_Z_MAX, CameraIntrinsics

CATEGORIES = ("Asteroid", "Capsule", "Rocket", "Satellite", "Station")
PRIMITIVE_KINDS = ("sphere", "box", "cylinder", "capsule")

AMBIENT = 0.1
DEFAULT_LIGHT = (0.3, -0.4, -1.0)  # direction towards the light, camera frame
MAX_BOUNDING_RADIUS = 2.5

_IDENTITY_QUAT = (1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Primitive:
    """One solid in target-body coordinates.

    ``dims`` per kind: sphere ``(radius,)``; box ``(hx, hy, hz)`` half extents;
    cylinder and capsule ``(radius, half_length)`` along the local z axis.
    ``orientation`` is a unit quaternion ``(w, x, y, z)``.
    """

    kind: str
    position: tuple[float, float, float]
    dims: tuple[float, ...]
    albedo: tuple[float, float, float]
    orientation: tuple[float, float, float, float] = _IDENTITY_QUAT

    def __post_init__(self):
        if self.kind not in PRIMITIVE_KINDS:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        expected = {"sphere": 1, "box": 3, "cylinder": 2, "capsule": 2}[self.kind]
        if len(self.dims) != expected or any(d <= 0 for d in self.dims):
            raise ValueError(f"{self.kind} needs {expected} positive dims, got {self.dims}")
        if abs(math.sqrt(sum(q * q for q in self.orientation)) - 1.0) > 1e-9:
            raise ValueError("orientation must be a unit quaternion")
        if any(not (0.0 <= a <= 1.0) for a in self.albedo):
            raise ValueError("albedo components must lie in [0, 1]")

    @property
    def rotation(self) -> np.ndarray:
        w, x, y, z = self.orientation
        return Rotation.from_quat([x, y, z, w]).as_matrix()

    def extent_radius(self) -> float:
        """Radius of a sphere about the target origin enclosing this primitive."""
        d = float(np.linalg.norm(self.position))
        if self.kind == "sphere":
            return d + self.dims[0]
        if self.kind == "box":
            return d + float(np.linalg.norm(self.dims))
        r, hl = self.dims
        if self.kind == "cylinder":
            return d + math.hypot(r, hl)
        return d + hl + r


@dataclass(frozen=True)
class TargetModel:
    id: str
    category: str
    primitives: tuple[Primitive, ...]
    split: str = "train"
    bounding_radius: float = field(default=0.0)

    def __post_init__(self):
        if not self.primitives:
            raise ValueError("a target model needs at least one primitive")
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if self.split not in ("train", "eval"):
            raise ValueError(f"split must be train or eval, got {self.split!r}")
        enclosing = max(p.extent_radius() for p in self.primitives)
        if self.bounding_radius < enclosing:
            object.__setattr__(self, "bounding_radius", enclosing)


@dataclass
class Frame:
    color: np.ndarray  # (H, W, 3) in [0, 1]
    depth: np.ndarray  # (H, W) meters, z_max for background
    timestamp: float = 0.0


def _quat_axis_x(angle: float) -> tuple:
    return (math.cos(angle / 2), math.sin(angle / 2), 0.0, 0.0)


def _quat_axis_y(angle: float) -> tuple:
    return (math.cos(angle / 2), 0.0, math.sin(angle / 2), 0.0)


def _gray(rng, lo=0.35, hi=0.7):
    g = rng.uniform(lo, hi)
    return (g, g, g)


def _asteroid(rng):
    prims = []
    for _ in range(int(rng.integers(4, 9))):
        offset = rng.normal(scale=0.35, size=3)
        norm = np.linalg.norm(offset)
        if norm > 1.2:
            offset *= 1.2 / norm
        prims.append(
            Primitive("sphere", tuple(offset), (float(rng.uniform(0.4, 0.8)),), _gray(rng, 0.4, 0.6))
        )
    return prims


def _capsule(rng):
    r = rng.uniform(0.5, 0.7)
    hl = rng.uniform(0.2, 0.4)
    shell = (0.85, 0.8, 0.7)
    prims = [Primitive("capsule", (0.0, 0.0, 0.0), (r, hl), shell)]
    # heat shield / nose as a cone approximated by stacked cylinders
    n = 4
    slab = 0.08
    for i in range(n):
        rad = r * (1.0 - (i + 1) / (n + 1)) + 0.05
        z = hl + r * 0.8 + i * 2 * slab
        prims.append(Primitive("cylinder", (0.0, 0.0, z), (rad, slab), (0.3, 0.3, 0.32)))
    return prims


def _rocket(rng):
    r = rng.uniform(0.25, 0.4)
    hl = rng.uniform(1.0, 1.6)
    body = (0.9, 0.9, 0.92)
    prims = [Primitive("cylinder", (0.0, 0.0, 0.0), (r, hl), body)]
    fin = (0.7, 0.2, 0.15)
    n_fins = int(rng.integers(3, 5))
    for i in range(n_fins):
        ang = 2 * math.pi * i / n_fins
        dx, dy = math.cos(ang), math.sin(ang)
        c = (dx * (r + 0.15), dy * (r + 0.15), -hl + 0.25)
        quat = (math.cos(ang / 2), 0.0, 0.0, math.sin(ang / 2))
        prims.append(Primitive("box", c, (0.18, 0.02, 0.25), fin, quat))
    return prims


def _satellite(rng):
    hb = tuple(float(v) for v in rng.uniform(0.3, 0.5, size=3))
    body = (0.8, 0.65, 0.2)  # gold foil
    panel = (0.15, 0.2, 0.55)
    span = rng.uniform(0.6, 0.9)
    prims = [Primitive("box", (0.0, 0.0, 0.0), hb, body)]
    for side in (-1.0, 1.0):
        prims.append(
            Primitive("box", (side * (hb[0] + span + 0.05), 0.0, 0.0), (span, 0.35, 0.02), panel)
        )
    return prims


def _station(rng):
    module = (0.85, 0.85, 0.85)
    panel = (0.2, 0.25, 0.6)
    n = int(rng.integers(2, 5))
    r = rng.uniform(0.25, 0.35)
    hl = rng.uniform(0.3, 0.45)
    prims = []
    # modules strung along x, alternating axis orientation
    x0 = -(n - 1) * hl
    for i in range(n):
        quat = _quat_axis_y(math.pi / 2) if i % 2 == 0 else _quat_axis_x(math.pi / 2)
        prims.append(Primitive("cylinder", (x0 + i * 2 * hl, 0.0, 0.0), (r, hl), module, quat))
    for side in (-1.0, 1.0):
        prims.append(Primitive("box", (0.0, side * (r + 0.6), 0.0), (0.3, 0.55, 0.02), panel))
    return prims


_RECIPES = {
    "Asteroid": _asteroid,
    "Capsule": _capsule,
    "Rocket": _rocket,
    "Satellite": _satellite,
    "Station": _station,
}


def generate_model(category: str, seed: int, model_id: str | None = None, split: str = "train") -> TargetModel:
    """Deterministic procedural target for ``(category, seed)``."""
    if category not in _RECIPES:
        raise ValueError(f"unknown category {category!r}")
    rng = np.random.default_rng([seed, CATEGORIES.index(category)])
    prims = _RECIPES[category](rng)
    return TargetModel(
        id=model_id or f"{category.lower()}_s{seed}",
        category=category,
        primitives=tuple(prims),
        split=split,
    )


def build_catalog(seed: int = 0, n_models: int = 18) -> list[TargetModel]:
    """The canonical catalog: models ``seed .. seed+n-1`` assigned round-robin to categories.

    Within each category the last model is held out for evaluation; the
    remaining surplus eval slots go to the categories with the most models,
    taking their second-to-last model. For 18 models this yields 12 train / 6 eval.
    """
    per_cat: dict[str, list[int]] = {c: [] for c in CATEGORIES}
    for i in range(n_models):
        per_cat[CATEGORIES[i % len(CATEGORIES)]].append(i)
    n_eval = n_models - (2 * n_models) // 3
    eval_idx = {idx[-1] for idx in per_cat.values() if idx}
    extra = n_eval - len(eval_idx)
    for cat in CATEGORIES:
        if extra <= 0:
            break
        if len(per_cat[cat]) >= 3:
            eval_idx.add(per_cat[cat][-2])
            extra -= 1
    models = []
    for cat in CATEGORIES:
        for k, i in enumerate(per_cat[cat]):
            split = "eval" if i in eval_idx else "train"
            models.append(generate_model(cat, seed + i, f"{cat.lower()}_{k + 1:02d}", split))
    return models


def sphere_model(radius: float = 0.5, albedo=(1.0, 1.0, 1.0), model_id: str = "sphere") -> TargetModel:
    """Single bright sphere used by the reduced sanity scenarios."""
    return TargetModel(
        id=model_id,
        category="Asteroid",
        primitives=(Primitive("sphere", (0.0, 0.0, 0.0), (float(radius),), tuple(albedo)),),
    )


def find_model(catalog: Sequence[TargetModel], model_id: str) -> TargetModel:
    for m in catalog:
        if m.id == model_id:
            return m
    raise KeyError(f"unknown model id {model_id!r}")


# --- ray casting -----------------------------------------------------------

_EPS = 1e-9


def _hit_sphere(o, d, r):
    # |o + t d|^2 = r^2
    a = np.einsum("ij,ij->i", d, d)
    b = np.einsum("ij,ij->i", o, d)
    c = np.einsum("ij,ij->i", o, o) - r * r
    disc = b * b - a * c
    t = np.full(len(d), np.inf)
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t1 = (-b - sq) / a
    t2 = (-b + sq) / a
    t = np.where(ok & (t1 > _EPS), t1, np.where(ok & (t2 > _EPS), t2, np.inf))
    p = o + np.where(np.isfinite(t), t, 0.0)[:, None] * d
    n = p / r
    return t, n


def _hit_box(o, d, h):
    h = np.asarray(h)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-h - o) * inv
        t2 = (h - o) * inv
    # rays parallel to a slab: inside -> (-inf, inf), outside -> empty
    par = d == 0
    inside = np.abs(o) <= h
    t1 = np.where(par, np.where(inside, -np.inf, np.inf), t1)
    t2 = np.where(par, np.where(inside, np.inf, -np.inf), t2)
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    t_near = tmin.max(axis=1)
    t_far = tmax.min(axis=1)
    ok = t_far >= np.maximum(t_near, _EPS)
    t = np.where(ok, np.where(t_near > _EPS, t_near, t_far), np.inf)
    entering = t_near > _EPS
    axis_near = tmin.argmax(axis=1)
    axis_far = tmax.argmin(axis=1)
    axis = np.where(entering, axis_near, axis_far)
    n = np.zeros_like(o)
    rows = np.arange(len(o))
    p = o + np.where(np.isfinite(t), t, 0.0)[:, None] * d
    n[rows, axis] = np.sign(p[rows, axis])
    n[rows, axis] = np.where(n[rows, axis] == 0, 1.0, n[rows, axis])
    return t, n


def _hit_cylinder(o, d, r, hl, capsule=False):
    """Cylinder (or capsule) along the local z axis."""
    n_rays = len(o)
    best = np.full(n_rays, np.inf)
    normal = np.zeros_like(o)

    a = d[:, 0] ** 2 + d[:, 1] ** 2
    b = o[:, 0] * d[:, 0] + o[:, 1] * d[:, 1]
    c = o[:, 0] ** 2 + o[:, 1] ** 2 - r * r
    disc = b * b - a * c
    ok = (disc >= 0) & (a > 1e-15)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    a_safe = np.where(a > 1e-15, a, 1.0)
    for sgn in (-1.0, 1.0):
        t = (-b + sgn * sq) / a_safe
        z = o[:, 2] + t * d[:, 2]
        good = ok & (t > _EPS) & (np.abs(z) <= hl) & (t < best)
        best = np.where(good, t, best)
        p = o + np.where(good, t, 0.0)[:, None] * d
        nn = np.stack([p[:, 0], p[:, 1], np.zeros(n_rays)], axis=1) / r
        normal = np.where(good[:, None], nn, normal)

    if capsule:
        for zc in (-hl, hl):
            t, nn = _hit_sphere(o - np.array([0.0, 0.0, zc]), d, r)
            good = t < best
            best = np.where(good, t, best)
            normal = np.where(good[:, None], nn, normal)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            for zc in (-hl, hl):
                t = (zc - o[:, 2]) / d[:, 2]
                p = o + np.where(np.isfinite(t), t, 0.0)[:, None] * d
                good = (
                    np.isfinite(t) & (t > _EPS) & (p[:, 0] ** 2 + p[:, 1] ** 2 <= r * r) & (t < best)
                )
                best = np.where(good, t, best)
                nn = np.zeros_like(o)
                nn[:, 2] = np.sign(zc)
                normal = np.where(good[:, None], nn, normal)
    return best, normal


def intersect_primitive(prim: Primitive, center_cam, rot_cam, origins, dirs):
    """Ray parameters ``t`` (inf for misses) and camera-frame unit normals."""
    d = dirs @ rot_cam
    o = np.broadcast_to((np.asarray(origins) - center_cam) @ rot_cam, d.shape)
    if prim.kind == "sphere":
        t, n = _hit_sphere(o, d, prim.dims[0])
    elif prim.kind == "box":
        t, n = _hit_box(o, d, prim.dims)
    elif prim.kind == "cylinder":
        t, n = _hit_cylinder(o, d, *prim.dims)
    else:
        t, n = _hit_cylinder(o, d, *prim.dims, capsule=True)
    n = n @ rot_cam.T
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    n = n / np.where(norm > 0, norm, 1.0)
    return t, n


def pixel_rays(intr: CameraIntrinsics) -> np.ndarray:
    """Un-normalized ray directions ``(H*W, 3)`` through pixel centers with unit z component."""
    u = (np.arange(intr.width) + 0.5 - intr.cx) / intr.fx
    v = (np.arange(intr.height) + 0.5 - intr.cy) / intr.fy
    uu, vv = np.meshgrid(u, v)
    return np.stack([uu.ravel(), vv.ravel(), np.ones(uu.size)], axis=1)


def _screen_window(intr, position, radius):
    """Pixel window that can contain the model, or None for 'cast everything'."""
    x, y, z = position
    if z - radius <= 0.05:
        return None
    from .camera import sphere_bbox

    bb = sphere_bbox(intr, position, radius)
    u0 = max(int(math.floor(bb.x)) - 1, 0)
    v0 = max(int(math.floor(bb.y)) - 1, 0)
    u1 = min(int(math.ceil(bb.x + bb.w)) + 1, intr.width)
    v1 = min(int(math.ceil(bb.y + bb.h)) + 1, intr.height)
    return u0, v0, u1, v1


def render(
    intr: CameraIntrinsics,
    model: TargetModel,
    position,
    orientation=None,
    light=DEFAULT_LIGHT,
    z_max: float = DEFAULT_Z_MAX,
    timestamp: float = 0.0,
) -> Frame:
    """Ray-cast a color image and depth map of ``model`` posed in the camera frame.

    ``orientation`` is a 3x3 rotation matrix (target body -> camera), or None
    for identity. Background pixels are black with depth ``z_max``.
    """
    H, W = intr.height, intr.width
    color = np.zeros((H, W, 3))
    depth = np.full((H, W), float(z_max))
    position = np.asarray(position, dtype=float)
    rot = np.eye(3) if orientation is None else np.asarray(orientation, dtype=float)
    if position[2] + model.bounding_radius <= 0:
        return Frame(color, depth, timestamp)

    window = _screen_window(intr, position, model.bounding_radius)
    if window is None:
        u0, v0, u1, v1 = 0, 0, W, H
    else:
        u0, v0, u1, v1 = window
        if u1 <= u0 or v1 <= v0:
            return Frame(color, depth, timestamp)

    us = (np.arange(u0, u1) + 0.5 - intr.cx) / intr.fx
    vs = (np.arange(v0, v1) + 0.5 - intr.cy) / intr.fy
    uu, vv = np.meshgrid(us, vs)
    dirs = np.stack([uu.ravel(), vv.ravel(), np.ones(uu.size)], axis=1)
    origins = np.zeros(3)

    best = np.full(len(dirs), np.inf)
    normals = np.zeros_like(dirs)
    albedo = np.zeros_like(dirs)
    for prim in model.primitives:
        c = position + rot @ np.asarray(prim.position)
        r = rot @ prim.rotation
        t, n = intersect_primitive(prim, c, r, origins, dirs)
        closer = t < best
        best = np.where(closer, t, best)
        normals = np.where(closer[:, None], n, normals)
        albedo = np.where(closer[:, None], np.asarray(prim.albedo), albedo)

    # t equals the hit z because every ray has unit z component
    hit = np.isfinite(best) & (best < z_max)
    light = np.asarray(light, dtype=float)
    light = light / np.linalg.norm(light)
    # face normals towards the viewer so back faces seen from inside still shade
    facing = np.sign(-np.einsum("ij,ij->i", normals, dirs))
    normals = normals * np.where(facing == 0, 1.0, facing)[:, None]
    lambert = np.maximum(0.0, normals @ light)
    shade = np.clip(albedo * lambert[:, None] + AMBIENT, 0.0, 1.0)

    h, w = v1 - v0, u1 - u0
    sub_c = np.where(hit[:, None], shade, 0.0).reshape(h, w, 3)
    sub_d = np.where(hit, best, z_max).reshape(h, w)
    color[v0:v1, u0:u1] = sub_c
    depth[v0:v1, u0:u1] = sub_d
    return Frame(color, depth, timestamp)


def euler_to_matrix(angles) -> np.ndarray:
    """Rotation matrix for intrinsic x-y-z Euler angles ``(alpha, beta, gamma)``."""
    return Rotation.from_euler("xyz", np.asarray(angles, dtype=float)).as_matrix()


def blur_frames(history: Sequence[Frame], n: int) -> Frame:
    """Average the colors of the ``n`` most recent frames (``history[0]`` is newest).

    Shorter histories average what is available. Depth and timestamp come from
    the newest frame.
    """
    if n < 1:
        raise ValueError("blur length must be >= 1")
    if not history:
        raise ValueError("empty frame history")
    used = history[: min(n, len(history))]
    newest = history[0]
    if len(used) == 1:
        return Frame(newest.color.copy(), newest.depth.copy(), newest.timestamp)
    color = np.mean(np.stack([f.color for f in used]), axis=0)
    return Frame(color, newest.depth.copy(), newest.timestamp)


def blur_length(level: int) -> int:
    """Number of averaged frames for blur ``level`` (0 disables blur)."""
    if level not in (0, 1, 2, 3, 4):
        raise ValueError(f"blur level must be in 0..4, got {level}")
    return 1 if level == 0 else level + 1


def write_ppm(path, color: np.ndarray):
    """Binary 8-bit PPM (P6)."""
    img = np.clip(np.round(np.asarray(color) * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise ValueError("not a binary PPM file")
    w, h, maxval = (int(g) for g in m.groups())
    pix = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=m.end()).reshape(h, w, 3)
    return pix.astype(float) / maxval


def write_depth(path, depth: np.ndarray):
    """Raw little-endian float32 dump, row-major."""
    Path(path).write_bytes(np.asarray(depth, dtype="<f4").tobytes(order="C"))


def read_depth(path, height: int, width: int) -> np.ndarray:
    return np.frombuffer(Path(path).read_bytes(), dtype="<f4").reshape(height, width)
