"""Brute-force reference computations used by the test suite.

Each oracle works from raw inputs (the log-odds array, box corners, grid
masks) with its own arithmetic, so an agreement with the fast code paths is
evidence rather than a tautology. They favour obviousness over speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .geometry import Aabb, ViewPose

EPS = 1e-12


@dataclass(frozen=True)
class OracleReport:
    quantity: str
    oracle: float
    subject: float
    rel_error: float

    @classmethod
    def compare(cls, quantity: str, oracle: float, subject: float, eps: float = EPS) -> "OracleReport":
        return cls(quantity, float(oracle), float(subject), abs(subject - oracle) / max(abs(oracle), eps))

    def within(self, tol: float) -> bool:
        return self.rel_error <= tol

    def __str__(self) -> str:
        return f"{self.quantity}: oracle={self.oracle:.6g} subject={self.subject:.6g} rel_err={self.rel_error:.3%}"


# --- view frustum -----------------------------------------------------------

@numba.njit(cache=True)
def _segment_blocked(lo, origin, res, threshold, cam, vx, vy, vz, ti, tj, tk):
    nx, ny, nz = lo.shape
    d = (vx, vy, vz)
    cell = [0, 0, 0]
    t_next = [math.inf, math.inf, math.inf]
    t_delta = [math.inf, math.inf, math.inf]
    step = [0, 0, 0]
    for a in range(3):
        u = (cam[a] - origin[a]) / res
        cell[a] = int(math.floor(u))
        if d[a] > 0:
            step[a] = 1
            t_delta[a] = res / d[a]
            t_next[a] = (cell[a] + 1 - u) * res / d[a]
        elif d[a] < 0:
            step[a] = -1
            t_delta[a] = -res / d[a]
            t_next[a] = (u - cell[a]) * res / -d[a]
    # t runs over [0, 1] from camera to sample
    while True:
        if cell[0] == ti and cell[1] == tj and cell[2] == tk:
            return False
        i, j, k = cell[0], cell[1], cell[2]
        if 0 <= i < nx and 0 <= j < ny and 0 <= k < nz:
            v = lo[i, j, k]
            if not np.isnan(v) and v >= threshold:
                return True
        a = 0
        if t_next[1] < t_next[a]:
            a = 1
        if t_next[2] < t_next[a]:
            a = 2
        if t_next[a] > 1.0:
            return False
        cell[a] += step[a]
        t_next[a] += t_delta[a]


@numba.njit(cache=True)
def _lattice_volume(lo, origin, res, threshold, bounds, cam, yaw, polar_lo, polar_hi, half_h, r_max, step):
    nx, ny, nz = lo.shape
    # lattice anchored to the voxel grid, not the camera, so that planes through
    # the camera (the wedge sides) do not pass through whole rows of samples
    m = int(math.ceil(r_max / step)) + 1
    base = np.empty(3)
    for a in range(3):
        base[a] = origin[a] + math.floor((cam[a] - origin[a]) / step) * step
    count = 0
    for a in range(-m, m):
        x = base[0] + (a + 0.5) * step
        if x < bounds[0, 0] or x > bounds[1, 0]:
            continue
        for b in range(-m, m):
            y = base[1] + (b + 0.5) * step
            if y < bounds[0, 1] or y > bounds[1, 1]:
                continue
            for c in range(-m, m):
                z = base[2] + (c + 0.5) * step
                if z < bounds[0, 2] or z > bounds[1, 2]:
                    continue
                vx, vy, vz = x - cam[0], y - cam[1], z - cam[2]
                r = math.sqrt(vx * vx + vy * vy + vz * vz)
                if r > r_max or r == 0.0:
                    continue
                polar = math.acos(vz / r)
                if polar < polar_lo or polar > polar_hi:
                    continue
                daz = math.atan2(vy, vx) - yaw
                daz = (daz + math.pi) % (2.0 * math.pi) - math.pi
                if abs(daz) > half_h:
                    continue
                # the sample itself must be Unknown
                i = int(math.floor((x - origin[0]) / res))
                j = int(math.floor((y - origin[1]) / res))
                k = int(math.floor((z - origin[2]) / res))
                if 0 <= i < nx and 0 <= j < ny and 0 <= k < nz:
                    if not np.isnan(lo[i, j, k]):
                        continue
                # and nothing Occupied between the camera and it, found by
                # visiting every voxel the open segment passes through
                if _segment_blocked(lo, origin, res, threshold, cam, vx, vy, vz, i, j, k):
                    continue
                count += 1
    return count * step**3


def frustum_unknown_volume_oracle(occ, pose: ViewPose, model, bounds: Aabb, sample_step: float | None = None) -> float:
    """Unknown, in-bounds, unoccluded volume of the view wedge, by lattice enumeration.

    Lattice points (spacing `sample_step`, default resolution / 5) are kept when
    they lie in the angular window and within r_max, sit in an Unknown voxel,
    and the straight segment back to the camera crosses no Occupied voxel
    (exact voxel traversal, so grazing a corner counts).
    """
    res = occ.layout.resolution
    step = res / 5 if sample_step is None else sample_step
    if step > res / 5 + 1e-12:
        raise ValueError("sample_step must be at most resolution / 5")
    polar_mid = math.pi / 2 - pose.pitch
    return float(_lattice_volume(
        occ.log_odds,
        np.asarray(occ.layout.origin, dtype=float),
        res,
        occ.sensor.threshold,
        np.array([bounds.min, bounds.max], dtype=float),
        np.asarray(pose.position, dtype=float),
        pose.yaw,
        polar_mid - model.v_fov / 2,
        polar_mid + model.v_fov / 2,
        model.h_fov / 2,
        model.r_max,
        step,
    ))


def wedge_volume(r_max: float, h_fov: float, v_fov: float, pitch: float = 0.0) -> float:
    """Closed-form volume of the spherical wedge az in [-h/2, h/2], polar window of width v."""
    p0 = math.pi / 2 - pitch - v_fov / 2
    p1 = math.pi / 2 - pitch + v_fov / 2
    return r_max**3 / 3.0 * h_fov * (math.cos(p0) - math.cos(p1))


def exhaustive_yaw_oracle(occ, position, model, spec, bounds: Aabb, step: float, gain_fn=None) -> tuple[float, float]:
    """Evaluate the gain at every multiple of `step` and return the argmax (first on ties).

    `gain_fn(occ, pose, model, spec, bounds)` defaults to the library's wedge
    gain; the oracle checks the yaw search, not the gain itself.
    """
    if gain_fn is None:
        from .gain import free_space_gain as gain_fn
    n = int(round(2 * math.pi / step))
    best_yaw, best_gain = 0.0, -math.inf
    for k in range(n):
        yaw = math.remainder(k * step, 2 * math.pi)
        g = gain_fn(occ, ViewPose(tuple(position), yaw, 0.0), model, spec, bounds)
        if g > best_gain:
            best_yaw, best_gain = yaw, g
    return best_yaw, best_gain


# --- grid paths --------------------------------------------------------------

def dijkstra_path_cost(blocked: np.ndarray, start, goal, standoff_cells: float = 0.0) -> float:
    """Shortest 8-connected path cost (in cells) from start to goal, inf if unreachable.

    Diagonal moves cost sqrt(2). With a standoff, the goal is any free cell
    whose centre lies within `standoff_cells` of the goal point (given in cell
    units, measured from cell corners as in continuous coordinates).
    """
    blocked = np.asarray(blocked, dtype=bool)
    nx, ny = blocked.shape
    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, w = [], [], []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            cost = math.sqrt(2.0) if di and dj else 1.0
            for i in range(nx):
                for j in range(ny):
                    ni, nj = i + di, j + dj
                    if 0 <= ni < nx and 0 <= nj < ny and not blocked[i, j] and not blocked[ni, nj]:
                        rows.append(idx[i, j])
                        cols.append(idx[ni, nj])
                        w.append(cost)
    graph = csr_matrix((w, (rows, cols)), shape=(nx * ny, nx * ny))
    dist = dijkstra(graph, indices=idx[start[0], start[1]])
    if standoff_cells <= 0:
        return float(dist[idx[goal[0], goal[1]]])
    gx, gy = goal
    best = math.inf
    for i in range(nx):
        for j in range(ny):
            if math.hypot(i + 0.5 - gx, j + 0.5 - gy) <= standoff_cells:
                best = min(best, float(dist[idx[i, j]]))
    return best


# --- voxel counting ---------------------------------------------------------

def voxel_counts(occ, region: Aabb) -> tuple[int, int]:
    """(unknown, known) voxel counts over voxels whose centre lies in `region`, by enumeration."""
    lay = occ.layout
    unknown = known = 0
    o = lay.origin
    r = lay.resolution
    for i in range(lay.shape[0]):
        cx = o[0] + (i + 0.5) * r
        if not region.min[0] <= cx <= region.max[0]:
            continue
        for j in range(lay.shape[1]):
            cy = o[1] + (j + 0.5) * r
            if not region.min[1] <= cy <= region.max[1]:
                continue
            for k in range(lay.shape[2]):
                cz = o[2] + (k + 0.5) * r
                if not region.min[2] <= cz <= region.max[2]:
                    continue
                if math.isnan(occ.log_odds[i, j, k]):
                    unknown += 1
                else:
                    known += 1
    return unknown, known


def explored_pct(occ, region: Aabb, baseline_unknown: int) -> float:
    unknown, _ = voxel_counts(occ, region)
    if baseline_unknown <= 0:
        return 100.0
    return 100.0 * (1.0 - unknown / baseline_unknown)


# --- scene geometry -----------------------------------------------------------

def march_range(scene, origin, direction, r_max: float, step: float = 1e-3) -> float:
    """First distance along a ray that is inside a box or below ground; inf past r_max."""
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    ts = np.arange(step, r_max + step, step)
    pts = o[None, :] + ts[:, None] * d[None, :]
    hit = pts[:, 2] <= scene.ground_z
    for b in scene.boxes:
        lo, hi = np.asarray(b.min), np.asarray(b.max)
        hit |= np.all((pts >= lo) & (pts <= hi), axis=1)
    first = np.flatnonzero(hit)
    return float(ts[first[0]]) if len(first) else math.inf


def idw_value(samples, point, radius: float) -> float:
    """Inverse-square-distance average of the samples within `radius` of `point`."""
    num = den = 0.0
    for pos, v in samples:
        dist = math.dist(pos, point)
        if dist > radius:
            continue
        if dist == 0.0:
            return float(v)
        w = 1.0 / dist**2
        num += w * v
        den += w
    return num / den if den > 0 else 0.0
