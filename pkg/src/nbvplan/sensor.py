"""Synthetic depth camera for box worlds.

Pixel rays sit on a uniform angular grid: column u turns the azimuth by
alpha_u around the pose yaw, row v offsets the elevation by beta_v around the
pose pitch. This is the same (theta, phi) parametrisation the gain module
marches, so what a pose is credited for and what it later observes line up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import Scene, ViewPose

NO_RETURN = math.nan  # return closer than r_min
MAX_RANGE = math.inf  # nothing within r_max


class RenderError(RuntimeError):
    """Camera placed inside an obstacle."""


@dataclass(frozen=True)
class CameraModel:
    h_fov: float = math.radians(86.0)
    v_fov: float = math.radians(57.0)
    r_min: float = 0.3
    r_max: float = 1.5
    width: int = 160
    height: int = 120

    def __post_init__(self):
        if not 0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")
        if not (0 < self.h_fov < math.pi and 0 < self.v_fov < math.pi):
            raise ValueError("fields of view must lie in (0, pi)")
        if self.width < 2 or self.height < 2:
            raise ValueError("image must be at least 2x2")

    def pixel_angles(self) -> tuple[np.ndarray, np.ndarray]:
        """Azimuth offsets per column and elevation offsets per row."""
        alpha = np.linspace(-self.h_fov / 2, self.h_fov / 2, self.width)
        beta = np.linspace(self.v_fov / 2, -self.v_fov / 2, self.height)
        return alpha, beta

    def ray_directions(self, pose: ViewPose) -> np.ndarray:
        """(height, width, 3) unit ray directions for a camera pose."""
        alpha, beta = self.pixel_angles()
        theta = pose.yaw + alpha[None, :]
        elev = pose.pitch + beta[:, None]
        ce = np.cos(elev)
        return np.stack(
            np.broadcast_arrays(ce * np.cos(theta), ce * np.sin(theta), np.sin(elev)), axis=-1
        )


@dataclass(frozen=True)
class DepthImage:
    width: int
    height: int
    ranges: np.ndarray  # (height, width); NO_RETURN / MAX_RANGE sentinels

    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.ranges)


def _cast(scene: Scene, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Nearest positive hit distance per ray (inf when nothing is hit)."""
    n = dirs.shape[0]
    best = np.full(n, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        for box in scene.box_array():
            t_near = np.full(n, -np.inf)
            t_far = np.full(n, np.inf)
            for a in range(3):
                d = dirs[:, a]
                t1 = (box[0, a] - origin[a]) * inv[:, a]
                t2 = (box[1, a] - origin[a]) * inv[:, a]
                lo = np.minimum(t1, t2)
                hi = np.maximum(t1, t2)
                parallel = d == 0.0
                inside = (box[0, a] <= origin[a]) & (origin[a] <= box[1, a])
                lo = np.where(parallel, np.where(inside, -np.inf, np.inf), lo)
                hi = np.where(parallel, np.where(inside, np.inf, -np.inf), hi)
                t_near = np.maximum(t_near, lo)
                t_far = np.minimum(t_far, hi)
            hit = (t_near <= t_far) & (t_near > 0.0)
            best = np.where(hit & (t_near < best), t_near, best)
        dz = dirs[:, 2]
        t_ground = (scene.ground_z - origin[2]) / dz
        ground = (dz < 0.0) & (t_ground > 0.0)
        best = np.where(ground & (t_ground < best), t_ground, best)
    return best


def ray_hit(scene: Scene, origin, direction) -> Optional[float]:
    """Distance to the first box or ground intersection, or None."""
    t = _cast(scene, np.asarray(origin, dtype=float), np.asarray(direction, dtype=float)[None, :])[0]
    return None if math.isinf(t) else float(t)


def inside_obstacle(scene: Scene, p) -> bool:
    return any(b.contains(p) for b in scene.boxes) or p[2] < scene.ground_z


def render_depth(scene: Scene, camera: ViewPose, model: CameraModel) -> DepthImage:
    origin = np.asarray(camera.position, dtype=float)
    if inside_obstacle(scene, origin):
        raise RenderError(f"camera at {camera.position} is inside an obstacle")
    dirs = model.ray_directions(camera).reshape(-1, 3)
    t = _cast(scene, origin, dirs)
    ranges = np.where(t > model.r_max, MAX_RANGE, t)
    ranges = np.where(ranges < model.r_min, NO_RETURN, ranges)
    return DepthImage(model.width, model.height, ranges.reshape(model.height, model.width))


def footprint_collides(scene: Scene, xy, radius: float, height: float) -> bool:
    """Whether a vertical disc-shaped body at `xy` intersects any box."""
    x, y = xy
    for b in scene.boxes:
        if b.min.z >= scene.ground_z + height:
            continue
        dx = max(b.min.x - x, 0.0, x - b.max.x)
        dy = max(b.min.y - y, 0.0, y - b.max.y)
        if dx * dx + dy * dy <= radius * radius:
            return True
    return False
