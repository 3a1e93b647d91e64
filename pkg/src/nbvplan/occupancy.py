"""Volumetric occupancy map on a uniform voxel grid with log-odds updates.

Unknown voxels are stored as NaN, so "never updated" and "updated" are told
apart without a second array. Depth images are integrated scan-wise: every
voxel touched by a scan receives at most one update, and a hit wins over a
miss within the same scan.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba
import numpy as np

from .geometry import Aabb, Point3, ViewPose


class PositioningError(ValueError):
    """Camera pose lies outside the mapped extent."""


class VoxelState(enum.IntEnum):
    UNKNOWN = 0
    FREE = 1
    OCCUPIED = 2


@dataclass(frozen=True)
class SensorModel:
    hit: float = 0.85
    miss: float = -0.4
    l_min: float = -2.0
    l_max: float = 3.5
    threshold: float = 0.0


@dataclass(frozen=True)
class GridLayout:
    """Voxel (i, j, k) covers origin + [i, i+1) * resolution along each axis."""

    origin: Point3
    resolution: float
    shape: tuple[int, int, int]

    @classmethod
    def from_bounds(cls, bounds: Aabb, resolution: float, pad: float = 0.0) -> "GridLayout":
        pad = math.ceil(pad / resolution - 1e-9) * resolution
        lo = np.asarray(bounds.min) - pad
        hi = np.asarray(bounds.max) + pad
        shape = tuple(int(max(1, math.ceil((h - l) / resolution - 1e-9))) for l, h in zip(lo, hi))
        return cls(Point3(*lo), float(resolution), shape)

    @property
    def extent(self) -> Aabb:
        hi = np.asarray(self.origin) + np.asarray(self.shape) * self.resolution
        return Aabb(self.origin, tuple(hi))

    @property
    def origin_array(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=float)

    def key_of(self, p) -> tuple[int, int, int]:
        idx = np.floor((np.asarray(p, dtype=float) - self.origin_array) / self.resolution)
        return tuple(int(v) for v in idx)

    def contains_key(self, key) -> bool:
        return all(0 <= k < n for k, n in zip(key, self.shape))

    def center_of(self, key) -> Point3:
        return Point3(*(self.origin_array + (np.asarray(key) + 0.5) * self.resolution))

    def centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.shape[axis]) + 0.5) * self.resolution

    def index_range(self, region: Aabb, axis: int) -> tuple[int, int]:
        """Half-open index range of voxels whose centers lie in the closed region."""
        o, r = self.origin[axis], self.resolution
        lo = math.ceil((region.min[axis] - o) / r - 0.5 - 1e-9)
        hi = math.floor((region.max[axis] - o) / r - 0.5 + 1e-9) + 1
        return max(lo, 0), min(hi, self.shape[axis])

    def region_slices(self, region: Aabb) -> tuple[slice, slice, slice]:
        return tuple(slice(*self.index_range(region, a)) for a in range(3))


@numba.njit(cache=True)
def _mark_scan(shape, origin, res, cam, dirs, ranges, r_min, r_max, mark, touched):
    nx, ny, nz = shape
    eps = 1e-5
    count = 0
    for n in range(dirs.shape[0]):
        rng = ranges[n]
        if np.isnan(rng):
            continue
        hit = not np.isinf(rng)
        t_end = rng + eps if hit else r_max
        if t_end <= r_min:
            continue
        d0, d1, d2 = dirs[n, 0], dirs[n, 1], dirs[n, 2]
        # hit voxel: end point nudged into the surface
        hx = hy = hz = -1
        if hit:
            hx = int(math.floor((cam[0] + t_end * d0 - origin[0]) / res))
            hy = int(math.floor((cam[1] + t_end * d1 - origin[1]) / res))
            hz = int(math.floor((cam[2] + t_end * d2 - origin[2]) / res))
        px = cam[0] + r_min * d0 - origin[0]
        py = cam[1] + r_min * d1 - origin[1]
        pz = cam[2] + r_min * d2 - origin[2]
        ix = int(math.floor(px / res))
        iy = int(math.floor(py / res))
        iz = int(math.floor(pz / res))
        sx = 1 if d0 > 0 else -1
        sy = 1 if d1 > 0 else -1
        sz = 1 if d2 > 0 else -1
        inf = np.inf
        if d0 != 0.0:
            bx = (ix + (1 if sx > 0 else 0)) * res
            tmx = r_min + (bx - px) / d0
            tdx = res / abs(d0)
        else:
            tmx = inf
            tdx = inf
        if d1 != 0.0:
            by = (iy + (1 if sy > 0 else 0)) * res
            tmy = r_min + (by - py) / d1
            tdy = res / abs(d1)
        else:
            tmy = inf
            tdy = inf
        if d2 != 0.0:
            bz = (iz + (1 if sz > 0 else 0)) * res
            tmz = r_min + (bz - pz) / d2
            tdz = res / abs(d2)
        else:
            tmz = inf
            tdz = inf
        while True:
            if hit and ix == hx and iy == hy and iz == hz:
                break
            if 0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz:
                idx = (ix * ny + iy) * nz + iz
                if mark[idx] == 0:
                    mark[idx] = 1
                    touched[count] = idx
                    count += 1
            if tmx < tmy:
                if tmx < tmz:
                    if tmx > t_end:
                        break
                    ix += sx
                    tmx += tdx
                else:
                    if tmz > t_end:
                        break
                    iz += sz
                    tmz += tdz
            else:
                if tmy < tmz:
                    if tmy > t_end:
                        break
                    iy += sy
                    tmy += tdy
                else:
                    if tmz > t_end:
                        break
                    iz += sz
                    tmz += tdz
        if hit and 0 <= hx < nx and 0 <= hy < ny and 0 <= hz < nz:
            idx = (hx * ny + hy) * nz + hz
            if mark[idx] == 0:
                touched[count] = idx
                count += 1
            mark[idx] = 2
    return count


@numba.njit(cache=True)
def _apply_scan(flat, mark, touched, count, hit, miss, l_min, l_max):
    for n in range(count):
        idx = touched[n]
        m = mark[idx]
        v = flat[idx]
        if np.isnan(v):
            v = 0.0
        v += hit if m == 2 else miss
        if v < l_min:
            v = l_min
        elif v > l_max:
            v = l_max
        flat[idx] = v
        mark[idx] = 0


@numba.njit(cache=True)
def _segment_free(lo, origin, res, a, b, radius, threshold, zone, zone_r):
    nx, ny, nz = lo.shape
    zr2 = zone_r * zone_r
    r2 = radius * radius + 1e-12
    ab0, ab1, ab2 = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    ab_len2 = ab0 * ab0 + ab1 * ab1 + ab2 * ab2
    i0 = int(math.ceil((min(a[0], b[0]) - radius - origin[0]) / res - 0.5 - 1e-9))
    i1 = int(math.floor((max(a[0], b[0]) + radius - origin[0]) / res - 0.5 + 1e-9))
    j0 = int(math.ceil((min(a[1], b[1]) - radius - origin[1]) / res - 0.5 - 1e-9))
    j1 = int(math.floor((max(a[1], b[1]) + radius - origin[1]) / res - 0.5 + 1e-9))
    k0 = int(math.ceil((min(a[2], b[2]) - radius - origin[2]) / res - 0.5 - 1e-9))
    k1 = int(math.floor((max(a[2], b[2]) + radius - origin[2]) / res - 0.5 + 1e-9))
    for i in range(i0, i1 + 1):
        cx = origin[0] + (i + 0.5) * res
        for j in range(j0, j1 + 1):
            cy = origin[1] + (j + 0.5) * res
            for k in range(k0, k1 + 1):
                cz = origin[2] + (k + 0.5) * res
                t = 0.0
                if ab_len2 > 0.0:
                    t = ((cx - a[0]) * ab0 + (cy - a[1]) * ab1 + (cz - a[2]) * ab2) / ab_len2
                    t = min(1.0, max(0.0, t))
                dx = cx - (a[0] + t * ab0)
                dy = cy - (a[1] + t * ab1)
                dz = cz - (a[2] + t * ab2)
                if dx * dx + dy * dy + dz * dz > r2:
                    continue
                if i < 0 or j < 0 or k < 0 or i >= nx or j >= ny or k >= nz:
                    return False
                v = lo[i, j, k]
                if np.isnan(v):
                    ex, ey, ez = cx - zone[0], cy - zone[1], cz - zone[2]
                    if ex * ex + ey * ey + ez * ez <= zr2:
                        continue
                    return False
                if v >= threshold:
                    return False
    return True


class OccupancyMap:
    """Dense log-odds voxel map; NaN marks voxels that were never updated."""

    def __init__(self, layout: GridLayout, sensor: SensorModel | None = None):
        self.layout = layout
        self.sensor = sensor or SensorModel()
        self.log_odds = np.full(layout.shape, np.nan, dtype=np.float64)
        self._mark = np.zeros(self.log_odds.size, dtype=np.uint8)
        self._touched = np.zeros(self.log_odds.size, dtype=np.int64)

    @classmethod
    def for_bounds(cls, bounds: Aabb, resolution: float = 0.1, pad: float = 0.2, sensor=None):
        return cls(GridLayout.from_bounds(bounds, resolution, pad), sensor)

    @property
    def resolution(self) -> float:
        return self.layout.resolution

    @property
    def origin(self) -> Point3:
        return self.layout.origin

    @property
    def extent(self) -> Aabb:
        return self.layout.extent

    def copy(self) -> "OccupancyMap":
        other = OccupancyMap(self.layout, self.sensor)
        other.log_odds[...] = self.log_odds
        return other

    # -- queries -----------------------------------------------------------

    def state_at(self, p) -> VoxelState:
        key = self.layout.key_of(p)
        if not self.layout.contains_key(key):
            return VoxelState.UNKNOWN
        return self._classify(self.log_odds[key])

    def _classify(self, v: float) -> VoxelState:
        if np.isnan(v):
            return VoxelState.UNKNOWN
        return VoxelState.OCCUPIED if v >= self.sensor.threshold else VoxelState.FREE

    def states(self) -> np.ndarray:
        """uint8 array of VoxelState values for the whole grid."""
        out = np.zeros(self.layout.shape, dtype=np.uint8)
        known = ~np.isnan(self.log_odds)
        out[known] = VoxelState.FREE
        with np.errstate(invalid="ignore"):
            out[known & (self.log_odds >= self.sensor.threshold)] = VoxelState.OCCUPIED
        return out

    def known_mask(self) -> np.ndarray:
        return ~np.isnan(self.log_odds)

    def is_segment_free(self, a, b, radius: float, assume_free=None) -> bool:
        """True iff every voxel centred within `radius` of segment ab is Free.

        `assume_free=(center, r)` lets Unknown voxels inside that sphere pass;
        Occupied voxels there still block.
        """
        if radius < 0:
            raise ValueError("radius must be non-negative")
        zone, zone_r = ((0.0, 0.0, 0.0), -1.0) if assume_free is None else assume_free
        return bool(
            _segment_free(
                self.log_odds,
                self.layout.origin_array,
                self.resolution,
                np.asarray(a, dtype=float),
                np.asarray(b, dtype=float),
                float(radius),
                self.sensor.threshold,
                np.asarray(zone, dtype=float),
                float(zone_r),
            )
        )

    def is_sphere_free(self, center, radius: float, assume_free=None) -> bool:
        return self.is_segment_free(center, center, radius, assume_free)

    def _region_view(self, region: Aabb) -> np.ndarray:
        if not self.extent.contains_box(region):
            raise ValueError(f"region {region} exceeds map extent {self.extent}")
        return self.log_odds[self.layout.region_slices(region)]

    def unknown_volume_in(self, region: Aabb) -> float:
        view = self._region_view(region)
        return int(np.isnan(view).sum()) * self.resolution**3

    def known_volume_in(self, region: Aabb) -> float:
        view = self._region_view(region)
        return int((~np.isnan(view)).sum()) * self.resolution**3

    def region_voxel_count(self, region: Aabb) -> int:
        return int(self._region_view(region).size)

    # -- updates -----------------------------------------------------------

    def integrate_depth(self, camera: ViewPose, model, depth) -> "OccupancyMap":
        """Ray-cast one depth image into the map in place; returns self."""
        if (depth.height, depth.width) != (model.height, model.width):
            raise ValueError("depth image dimensions do not match the camera model")
        if not self.extent.contains(camera.position):
            raise PositioningError(f"camera {camera.position} outside map extent")
        dirs = model.ray_directions(camera).reshape(-1, 3)
        ranges = np.ascontiguousarray(depth.ranges, dtype=float).reshape(-1)
        count = _mark_scan(
            self.layout.shape,
            self.layout.origin_array,
            self.resolution,
            np.asarray(camera.position, dtype=float),
            dirs,
            ranges,
            float(model.r_min),
            float(model.r_max),
            self._mark,
            self._touched,
        )
        s = self.sensor
        _apply_scan(self.log_odds.reshape(-1), self._mark, self._touched, count, s.hit, s.miss, s.l_min, s.l_max)
        return self

    # -- export ------------------------------------------------------------

    def export_voxels(self, fh) -> int:
        """Write known voxels as 'i j k state log_odds' lines."""
        states = self.states()
        keys = np.argwhere(states != VoxelState.UNKNOWN)
        for i, j, k in keys:
            fh.write(f"{i} {j} {k} {VoxelState(states[i, j, k]).name.lower()} {self.log_odds[i, j, k]:.4f}\n")
        return len(keys)

    def export_points(self, fh) -> int:
        """Write known voxel centres as 'x y z state' lines."""
        states = self.states()
        keys = np.argwhere(states != VoxelState.UNKNOWN)
        centers = self.layout.origin_array + (keys + 0.5) * self.resolution
        for (i, j, k), (x, y, z) in zip(keys, centers):
            fh.write(f"{x:.3f} {y:.3f} {z:.3f} {VoxelState(states[i, j, k]).name.lower()}\n")
        return len(keys)
