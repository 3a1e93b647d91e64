"""Utility of a candidate camera pose.

The free-space term marches rays over the camera's angular wedge and sums the
spherical cell volume of every Unknown sample until a ray reaches an Occupied
voxel or r_max. Angles follow the physics convention: theta is azimuth, phi is
the polar angle from +z, so a level camera looks along phi = pi/2. Radial
samples sit at cell mid-radii, which makes the cell-volume formula exact for
the shell it represents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .geometry import Aabb, Mode, Utility, ViewPose, normalize_yaw
from .occupancy import OccupancyMap
from .sensor import CameraModel


@dataclass(frozen=True)
class GainWeights:
    w_f: float = 5.0
    w_m: float = 1.0
    w_v: float = 500.0

    def __post_init__(self):
        for v in (self.w_f, self.w_m, self.w_v):
            if not (math.isfinite(v) and v >= 0):
                raise ValueError("gain weights must be finite and non-negative")

    def scaled(self, c: float) -> "GainWeights":
        return GainWeights(self.w_f * c, self.w_m * c, self.w_v * c)


@dataclass(frozen=True)
class GainBreakdown:
    g_f: float
    g_m: float
    g_v: float
    total: float


@dataclass(frozen=True)
class RayMarchSpec:
    delta_r: float
    delta_theta: float
    delta_phi: float

    @classmethod
    def default_for(cls, resolution: float, r_max: float) -> "RayMarchSpec":
        step = resolution / r_max
        return cls(resolution, step, step)

    def check(self, resolution: float, r_max: float) -> None:
        tol = 1e-9
        if self.delta_r > resolution + tol:
            raise ValueError("delta_r exceeds the map resolution")
        if r_max * max(self.delta_theta, self.delta_phi) > resolution + tol:
            raise ValueError("angular step too coarse for the map resolution at r_max")

    def radial_cells(self, r_max: float) -> int:
        return max(1, int(round(r_max / self.delta_r)))


def cell_volume(r: float, phi: float, spec: RayMarchSpec) -> float:
    dr = spec.delta_r
    return (2.0 * r * r * dr + dr**3 / 6.0) * spec.delta_theta * math.sin(phi) * math.sin(spec.delta_phi / 2.0)


def angular_grid(center: float, width: float, step: float) -> tuple[np.ndarray, float]:
    """Bin centres tiling [center - width/2, center + width/2] with bins no wider than step."""
    n = max(1, math.ceil(width / step - 1e-9))
    d = width / n
    return center - width / 2 + (np.arange(n) + 0.5) * d, d


@numba.njit(cache=True)
def _march(lo, origin, res, threshold, bounds, pos, theta, phi, dtheta, dphi, dr, n_r):
    nx, ny, nz = lo.shape
    st, ct = math.sin(theta), math.cos(theta)
    sp, cp = math.sin(phi), math.cos(phi)
    d0, d1, d2 = sp * ct, sp * st, cp
    ang = dtheta * sp * math.sin(dphi / 2.0)
    total = 0.0
    for k in range(n_r):
        r = (k + 0.5) * dr
        x = pos[0] + r * d0
        y = pos[1] + r * d1
        z = pos[2] + r * d2
        if (
            x < bounds[0, 0] or x > bounds[1, 0]
            or y < bounds[0, 1] or y > bounds[1, 1]
            or z < bounds[0, 2] or z > bounds[1, 2]
        ):
            break
        i = int(math.floor((x - origin[0]) / res))
        j = int(math.floor((y - origin[1]) / res))
        kk = int(math.floor((z - origin[2]) / res))
        if 0 <= i < nx and 0 <= j < ny and 0 <= kk < nz:
            v = lo[i, j, kk]
            if not np.isnan(v):
                if v >= threshold:
                    break
                continue
        total += (2.0 * r * r * dr + dr * dr * dr / 6.0) * ang
    return total


@numba.njit(cache=True)
def _per_theta(lo, origin, res, threshold, bounds, pos, thetas, phis, dtheta, dphi, dr, n_r):
    out = np.zeros(thetas.shape[0])
    for a in range(thetas.shape[0]):
        s = 0.0
        for b in range(phis.shape[0]):
            s += _march(lo, origin, res, threshold, bounds, pos, thetas[a], phis[b], dtheta, dphi, dr, n_r)
        out[a] = s
    return out


@numba.njit(cache=True)
def _wedge_batch(lo, origin, res, threshold, bounds, positions, yaws, pitches,
                 h_fov, v_fov, n_theta, n_phi, dr, n_r):
    n = positions.shape[0]
    out = np.zeros(n)
    dtheta = h_fov / n_theta
    dphi = v_fov / n_phi
    for p in range(n):
        pos = positions[p]
        t0 = yaws[p] - h_fov / 2.0
        f0 = math.pi / 2.0 - pitches[p] - v_fov / 2.0
        s = 0.0
        for a in range(n_theta):
            th = t0 + (a + 0.5) * dtheta
            for b in range(n_phi):
                s += _march(lo, origin, res, threshold, bounds, pos, th, f0 + (b + 0.5) * dphi, dtheta, dphi, dr, n_r)
        out[p] = s
    return out


def _map_args(occ: OccupancyMap, bounds: Aabb):
    return occ.log_odds, occ.layout.origin_array, occ.resolution, occ.sensor.threshold, bounds.as_array()


def free_space_gain(occ: OccupancyMap, pose: ViewPose, model: CameraModel, spec: RayMarchSpec, bounds: Aabb) -> float:
    """Unknown volume inside the view wedge of `pose`, in cubic metres."""
    return float(free_space_gains(occ, [pose], model, spec, bounds)[0])


def free_space_gains(occ, poses, model, spec, bounds) -> np.ndarray:
    """free_space_gain for many poses in one pass."""
    if len(poses) == 0:
        return np.zeros(0)
    positions = np.array([p.position for p in poses], dtype=float)
    yaws = np.array([p.yaw for p in poses], dtype=float)
    pitches = np.array([p.pitch for p in poses], dtype=float)
    n_theta = max(1, math.ceil(model.h_fov / spec.delta_theta - 1e-9))
    n_phi = max(1, math.ceil(model.v_fov / spec.delta_phi - 1e-9))
    return _wedge_batch(
        *_map_args(occ, bounds), positions, yaws, pitches,
        model.h_fov, model.v_fov, n_theta, n_phi, spec.delta_r, spec.radial_cells(model.r_max),
    )


def azimuth_profile(occ, position, model, spec, bounds, pitch: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-azimuth-bin gain around a full turn. Returns (bin centres, gains)."""
    n_az = max(1, math.ceil(2 * math.pi / spec.delta_theta - 1e-9))
    daz = 2 * math.pi / n_az
    thetas = (np.arange(n_az) + 0.5) * daz
    phis, dphi = angular_grid(math.pi / 2 - pitch, model.v_fov, spec.delta_phi)
    gains = _per_theta(
        *_map_args(occ, bounds), np.asarray(position, dtype=float), thetas, phis,
        daz, dphi, spec.delta_r, spec.radial_cells(model.r_max),
    )
    return thetas, gains


def best_yaw(occ, position, model, spec, bounds, yaw_step: float = math.radians(10.0)) -> tuple[float, float]:
    """Yaw whose horizontal window holds the most unknown volume, and its gain.

    Ray gains are computed once per azimuth bin around the full circle; each
    candidate yaw is scored by a sliding-window sum over those bins. The
    reported gain is a wedge evaluation at the chosen yaw, so it equals
    free_space_gain for that pose.
    """
    n_yaw = int(round(2 * math.pi / yaw_step))
    if n_yaw < 8 or abs(n_yaw * yaw_step - 2 * math.pi) > 1e-6:
        raise ValueError("yaw_step must divide the circle into at least 8 sectors")
    thetas, gains = azimuth_profile(occ, position, model, spec, bounds)
    n_az = len(thetas)
    daz = 2 * math.pi / n_az
    csum = np.concatenate([[0.0], np.cumsum(np.concatenate([gains, gains, gains]))])
    half = model.h_fov / 2
    best, best_score = 0.0, -1.0
    for c in range(n_yaw):
        yaw = c * yaw_step
        # bins whose centre lies in [yaw - half, yaw + half]
        first = math.ceil((yaw - half) / daz - 0.5 - 1e-9)
        last = math.floor((yaw + half) / daz - 0.5 + 1e-9)
        score = csum[last + 1 + n_az] - csum[first + n_az]
        if score > best_score + 1e-12:
            best, best_score = yaw, score
    yaw = normalize_yaw(best)
    g = free_space_gain(occ, ViewPose(position, yaw, 0.0), model, spec, bounds)
    return yaw, g


class VisitedSet:
    """Executed camera poses, matched with position and yaw tolerances."""

    def __init__(self, pos_tol: float = 0.05, yaw_tol: float = math.radians(10.0)):
        if pos_tol <= 0 or yaw_tol <= 0:
            raise ValueError("tolerances must be positive")
        self.pos_tol = pos_tol
        self.yaw_tol = yaw_tol
        self._poses: list[ViewPose] = []
        self._pos = np.zeros((0, 3))
        self._yaw = np.zeros(0)

    def add(self, pose: ViewPose) -> None:
        self._poses.append(pose)
        self._pos = np.vstack([self._pos, np.asarray(pose.position)[None, :]])
        self._yaw = np.append(self._yaw, pose.yaw)

    def __len__(self) -> int:
        return len(self._poses)

    def __iter__(self):
        return iter(self._poses)

    def penalties(self, positions: np.ndarray, yaws: np.ndarray) -> np.ndarray:
        """-1 for each query pose matching a visited pose, else 0."""
        positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        out = np.zeros(len(positions))
        if not self._poses or len(positions) == 0:
            return out
        d = np.linalg.norm(positions[:, None, :] - self._pos[None, :, :], axis=2)
        dy = np.abs((np.asarray(yaws)[:, None] - self._yaw[None, :] + math.pi) % (2 * math.pi) - math.pi)
        match = (d <= self.pos_tol) & (dy <= self.yaw_tol)
        out[match.any(axis=1)] = -1.0
        return out


def visited_penalty(pose: ViewPose, visited, pos_tol: float = 0.05, yaw_tol: float = math.radians(10.0)) -> float:
    if pos_tol <= 0 or yaw_tol <= 0:
        raise ValueError("tolerances must be positive")
    for q in visited:
        if pose.position.distance(q.position) <= pos_tol and abs(normalize_yaw(pose.yaw - q.yaw)) <= yaw_tol:
            return -1.0
    return 0.0


def combine(g_f: float, g_m: float, g_v: float, weights: GainWeights, mode: Mode) -> GainBreakdown:
    if mode is Mode.EXPLORE:
        g_m = 0.0
    total = weights.w_f * g_f + weights.w_m * g_m + weights.w_v * g_v
    return GainBreakdown(float(g_f), float(g_m), float(g_v), float(total))


def weighted_gain(pose, occ, intensity, visited, weights, mode, model, spec, bounds) -> GainBreakdown:
    g_f = free_space_gain(occ, pose, model, spec, bounds)
    g_m = 0.0
    if mode is Mode.EXPLORE_INSPECT and intensity is not None:
        g_m = intensity.value_at(pose.position)
    if isinstance(visited, VisitedSet):
        g_v = float(visited.penalties(np.asarray(pose.position)[None, :], np.array([pose.yaw]))[0])
    else:
        g_v = visited_penalty(pose, visited)
    return combine(g_f, g_m, g_v, weights, mode)


def discounted_score(gain: float, branch_step: float, kind: Utility, lam: float = 0.25) -> float:
    """Apply a motion-cost discount based on the node-to-parent distance."""
    if branch_step < 0 or lam < 0:
        raise ValueError("branch_step and lambda must be non-negative")
    if kind is Utility.WEIGHTED:
        return gain
    if kind is Utility.EXPONENTIAL:
        return gain * math.exp(-lam * branch_step)
    if kind is Utility.LINEAR:
        return gain - lam * branch_step
    raise ValueError(f"unknown utility {kind!r}")


@dataclass
class GainContext:
    """Everything needed to score poses against one frozen map snapshot."""

    occ: OccupancyMap
    intensity: object  # IntensityMap or None
    visited: VisitedSet
    weights: GainWeights
    mode: Mode
    model: CameraModel
    spec: RayMarchSpec
    bounds: Aabb
    evaluations: int = 0

    def evaluate(self, pose: ViewPose, g_f: float | None = None) -> GainBreakdown:
        self.evaluations += 1
        if g_f is None:
            g_f = free_space_gain(self.occ, pose, self.model, self.spec, self.bounds)
        g_m = 0.0
        if self.mode is Mode.EXPLORE_INSPECT and self.intensity is not None:
            g_m = self.intensity.value_at(pose.position)
        g_v = float(self.visited.penalties(np.asarray(pose.position)[None, :], np.array([pose.yaw]))[0])
        return combine(g_f, g_m, g_v, self.weights, self.mode)

    def evaluate_many(self, poses) -> list[GainBreakdown]:
        if not poses:
            return []
        self.evaluations += len(poses)
        g_f = free_space_gains(self.occ, poses, self.model, self.spec, self.bounds)
        positions = np.array([p.position for p in poses], dtype=float)
        if self.mode is Mode.EXPLORE_INSPECT and self.intensity is not None:
            g_m = self.intensity.values_at(positions)
        else:
            g_m = np.zeros(len(poses))
        g_v = self.visited.penalties(positions, np.array([p.yaw for p in poses]))
        return [combine(f, m, v, self.weights, self.mode) for f, m, v in zip(g_f, g_m, g_v)]

    def best_yaw(self, position, yaw_step: float = math.radians(10.0)) -> tuple[float, float]:
        return best_yaw(self.occ, position, self.model, self.spec, self.bounds, yaw_step)
