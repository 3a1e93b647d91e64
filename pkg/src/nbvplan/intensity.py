"""Prior contamination-intensity voxel map built from point measurements."""

from __future__ import annotations

import math

import numpy as np

from .geometry import Aabb
from .occupancy import GridLayout


class IntensityMap:
    """Scalar intensity per voxel, sharing the occupancy grid layout.

    ``reads`` counts value/gradient queries so callers can verify that a
    pure exploration run never touches the map.
    """

    def __init__(self, layout: GridLayout, values: np.ndarray):
        if values.shape != tuple(layout.shape):
            raise ValueError("values do not match layout shape")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("intensity values must be finite and non-negative")
        self.layout = layout
        self.values = values
        self.reads = 0

    @classmethod
    def zeros(cls, layout: GridLayout) -> "IntensityMap":
        return cls(layout, np.zeros(layout.shape))

    def value_at(self, p) -> float:
        self.reads += 1
        key = self.layout.key_of(p)
        if not self.layout.contains_key(key):
            return 0.0
        return float(self.values[key])

    def values_at(self, points) -> np.ndarray:
        """Vectorised value_at for an (n, 3) array."""
        self.reads += 1
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        idx = np.floor((pts - self.layout.origin_array) / self.layout.resolution).astype(np.int64)
        shape = np.asarray(self.layout.shape)
        ok = np.all((idx >= 0) & (idx < shape), axis=1)
        out = np.zeros(len(pts))
        i = idx[ok]
        out[ok] = self.values[i[:, 0], i[:, 1], i[:, 2]]
        return out

    def _trilinear(self, p: np.ndarray) -> float:
        res = self.layout.resolution
        u = (p - self.layout.origin_array) / res - 0.5
        base = np.floor(u).astype(int)
        frac = u - base
        total = 0.0
        for corner in range(8):
            off = np.array([(corner >> 2) & 1, (corner >> 1) & 1, corner & 1])
            key = base + off
            if not self.layout.contains_key(key):
                continue
            w = float(np.prod(np.where(off == 1, frac, 1.0 - frac)))
            total += w * self.values[tuple(key)]
        return total

    def gradient_at(self, p) -> np.ndarray:
        """Central-difference gradient of the trilinear field, step one voxel."""
        self.reads += 1
        p = np.asarray(p, dtype=float)
        h = self.layout.resolution
        grad = np.zeros(3)
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            fp = self._trilinear(p + e)
            fm = self._trilinear(p - e)
            # rounding noise on flat stretches must read as exactly flat
            if abs(fp - fm) <= 1e-12 * max(abs(fp), abs(fm)):
                continue
            grad[a] = (fp - fm) / (2.0 * h)
        return grad


def build_intensity(samples, layout: GridLayout, influence_radius: float = 2.0) -> IntensityMap:
    """Inverse-distance-squared interpolation of point samples within a radius.

    A voxel centre that coincides with a sample takes that sample's value.
    """
    if influence_radius <= 0:
        raise ValueError("influence_radius must be positive")
    samples = list(samples)
    num = np.zeros(layout.shape)
    den = np.zeros(layout.shape)
    exact_sum = np.zeros(layout.shape)
    exact_n = np.zeros(layout.shape)
    for p, v in samples:
        if v < 0:
            raise ValueError(f"negative intensity sample {v} at {p}")
        c = np.asarray(p, dtype=float)
        box = Aabb(tuple(c - influence_radius), tuple(c + influence_radius))
        sl = [slice(*layout.index_range(box, a)) for a in range(3)]
        if any(s.start >= s.stop for s in sl):
            continue
        gx, gy, gz = np.meshgrid(*(layout.centers(a)[sl[a]] for a in range(3)), indexing="ij")
        d2 = (gx - c[0]) ** 2 + (gy - c[1]) ** 2 + (gz - c[2]) ** 2
        inside = d2 <= influence_radius**2
        exact = d2 <= 1e-18
        w = np.zeros_like(d2)
        far = inside & ~exact
        w[far] = 1.0 / d2[far]
        sl = tuple(sl)
        num[sl] += w * v
        den[sl] += w
        exact_sum[sl] += np.where(exact, v, 0.0)
        exact_n[sl] += exact
    values = np.zeros(layout.shape)
    has = den > 0
    values[has] = num[has] / den[has]
    hit = exact_n > 0
    values[hit] = exact_sum[hit] / exact_n[hit]
    return IntensityMap(layout, values)


def gradient_direction(grad: np.ndarray) -> tuple[float, float] | None:
    """(yaw, elevation) of a gradient vector, or None for a zero vector."""
    n = float(np.linalg.norm(grad))
    if n == 0.0:
        return None
    yaw = math.atan2(grad[1], grad[0])
    elev = math.asin(max(-1.0, min(1.0, grad[2] / n)))
    return yaw, elev
