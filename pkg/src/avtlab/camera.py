"""Pinhole camera model and depth-map geometry.

Pixel convention: column index ``u`` grows to the right, row index ``v`` grows
downwards, and the camera looks down ``+z``. Pixel ``(u, v)`` covers the
continuous square ``[u, u+1) x [v, v+1)``; its center is ``(u+0.5, v+0.5)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Depth value used for "no surface" (background) pixels.
DEFAULT_Z_MAX = 20.0


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    alpha_x: float
    alpha_y: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def scaled(self, width: int, height: int) -> "CameraIntrinsics":
        """Same field of view at a different resolution."""
        return intrinsics_from_fov(self.alpha_x, self.alpha_y, width, height)


def intrinsics_from_fov(alpha_x: float, alpha_y: float, width: int, height: int) -> CameraIntrinsics:
    """Build intrinsics from perspective angles (radians) and resolution (pixels)."""
    for a in (alpha_x, alpha_y):
        if not (0.0 < a < math.pi):
            raise ValueError(f"perspective angle must lie in (0, pi), got {a!r}")
    if int(width) != width or int(height) != height or width < 1 or height < 1:
        raise ValueError(f"resolution must be positive integers, got {width}x{height}")
    width, height = int(width), int(height)
    return CameraIntrinsics(
        fx=width / (2.0 * math.tan(alpha_x / 2.0)),
        fy=height / (2.0 * math.tan(alpha_y / 2.0)),
        cx=width / 2.0,
        cy=height / 2.0,
        width=width,
        height=height,
        alpha_x=float(alpha_x),
        alpha_y=float(alpha_y),
    )


def default_camera() -> CameraIntrinsics:
    """60 x 60 degree field of view at 256 x 256 pixels."""
    return intrinsics_from_fov(math.radians(60.0), math.radians(60.0), 256, 256)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned image box; ``(x, y)`` is the top-left corner in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"bounding box extent must be positive, got w={self.w}, h={self.h}")

    def intersects_image(self, width: int, height: int) -> bool:
        return self.x < width and self.y < height and self.x + self.w > 0 and self.y + self.h > 0

    def clipped(self, width: int, height: int) -> "BoundingBox":
        x0, y0 = max(self.x, 0.0), max(self.y, 0.0)
        x1, y1 = min(self.x + self.w, width), min(self.y + self.h, height)
        if x1 <= x0 or y1 <= y0:
            raise ValueError("bounding box does not intersect the image")
        return BoundingBox(x0, y0, x1 - x0, y1 - y0)

    def shifted(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0


def project(intr: CameraIntrinsics, p) -> np.ndarray:
    """Project camera-frame point(s) ``(..., 3)`` to continuous pixel coordinates ``(..., 2)``."""
    p = np.asarray(p, dtype=float)
    z = p[..., 2]
    if np.any(z <= 0):
        raise ValueError("cannot project a point with z <= 0")
    u = intr.fx * p[..., 0] / z + intr.cx
    v = intr.fy * p[..., 1] / z + intr.cy
    return np.stack([u, v], axis=-1)


def backproject(intr: CameraIntrinsics, u, v, depth) -> np.ndarray:
    """Inverse of :func:`project` for a known depth (z-coordinate)."""
    u, v, depth = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (u, v, depth)))
    if np.any(depth <= 0):
        raise ValueError("depth must be strictly positive")
    x = depth * (u - intr.cx) / intr.fx
    y = depth * (v - intr.cy) / intr.fy
    return np.stack([x, y, depth], axis=-1)


def _check_dims(intr: CameraIntrinsics, depth_map: np.ndarray):
    if depth_map.shape != (intr.height, intr.width):
        raise ValueError(
            f"depth map shape {depth_map.shape} does not match camera {intr.height}x{intr.width}"
        )


def valid_depth_mask(depth_map: np.ndarray, z_max: float = DEFAULT_Z_MAX) -> np.ndarray:
    return (depth_map > 0.0) & (depth_map < z_max)


def _cloud_from_mask(intr: CameraIntrinsics, depth_map: np.ndarray, mask: np.ndarray) -> np.ndarray:
    v, u = np.nonzero(mask)
    if v.size == 0:
        return np.empty((0, 3))
    return backproject(intr, u + 0.5, v + 0.5, depth_map[v, u])


def depth_to_cloud(
    intr: CameraIntrinsics,
    depth_map: np.ndarray,
    mask: np.ndarray | None = None,
    z_max: float = DEFAULT_Z_MAX,
) -> np.ndarray:
    """Point cloud ``(n, 3)`` of all valid pixels, in row-major pixel order.

    A pixel is valid when its depth lies strictly inside ``(0, z_max)`` and,
    if ``mask`` is given, the mask is true there.
    """
    depth_map = np.asarray(depth_map, dtype=float)
    _check_dims(intr, depth_map)
    valid = valid_depth_mask(depth_map, z_max)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != depth_map.shape:
            raise ValueError("mask shape does not match depth map")
        valid &= mask
    return _cloud_from_mask(intr, depth_map, valid)


def bbox_pixel_mask(bbox: BoundingBox, width: int, height: int) -> np.ndarray:
    """Pixels whose centers fall inside ``[x, x+w) x [y, y+h)``."""
    uc = np.arange(width) + 0.5
    vc = np.arange(height) + 0.5
    in_u = (uc >= bbox.x) & (uc < bbox.x + bbox.w)
    in_v = (vc >= bbox.y) & (vc < bbox.y + bbox.h)
    return in_v[:, None] & in_u[None, :]


def frustum_crop(
    intr: CameraIntrinsics,
    depth_map: np.ndarray,
    bbox: BoundingBox,
    z_max: float = DEFAULT_Z_MAX,
) -> np.ndarray:
    """Frustum proposal: valid-depth points whose pixel lies inside ``bbox``.

    An empty result is returned as a ``(0, 3)`` array, not raised.
    """
    depth_map = np.asarray(depth_map, dtype=float)
    _check_dims(intr, depth_map)
    if not bbox.intersects_image(intr.width, intr.height):
        raise ValueError("bounding box does not intersect the image")
    mask = bbox_pixel_mask(bbox, intr.width, intr.height) & valid_depth_mask(depth_map, z_max)
    return _cloud_from_mask(intr, depth_map, mask)


def frustum_average(cloud) -> np.ndarray:
    """Component-wise mean of a non-empty point cloud."""
    cloud = np.asarray(cloud, dtype=float)
    if cloud.ndim != 2 or cloud.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) cloud, got shape {cloud.shape}")
    if len(cloud) == 0:
        raise ValueError("cannot average an empty point cloud")
    return cloud.mean(axis=0)


def is_visible(intr: CameraIntrinsics, r_cam, z_max: float = DEFAULT_Z_MAX, z_min: float = 0.1) -> bool:
    """Center-of-mass visibility: in depth range and projecting inside the image."""
    r_cam = np.asarray(r_cam, dtype=float)
    z = r_cam[2]
    if not (z_min < z < z_max):
        return False
    u, v = project(intr, r_cam)
    return bool(0.0 <= u < intr.width and 0.0 <= v < intr.height)


def sphere_bbox(intr: CameraIntrinsics, center, radius: float) -> BoundingBox | None:
    """Image box enclosing the projection of a sphere, or None if it is not in front of the camera.

    Uses the tangent-cone bound per axis, which is exact for the silhouette
    extent along u and v.
    """
    c = np.asarray(center, dtype=float)
    x, y, z = c
    if z - radius <= 1e-6:
        return None

    def extent(a: float, f: float, off: float) -> tuple[float, float]:
        # tangent lines from the origin in the (a, z) plane
        d2 = a * a + z * z - radius * radius
        s = math.sqrt(max(d2, 0.0))
        den = z * z - radius * radius
        t1 = (a * z - radius * s) / den
        t2 = (a * z + radius * s) / den
        return f * t1 + off, f * t2 + off

    u0, u1 = extent(x, intr.fx, intr.cx)
    v0, v1 = extent(y, intr.fy, intr.cy)
    return BoundingBox(u0, v0, max(u1 - u0, 1e-9), max(v1 - v0, 1e-9))
