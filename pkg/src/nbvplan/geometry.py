"""Geometric primitives and the scenario data model shared by every module."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi


class Point3(NamedTuple):
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)

    def distance(self, other) -> float:
        return math.dist(self, other)


def as_point(p) -> Point3:
    x, y, z = (float(v) for v in p)
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
        raise ValueError(f"non-finite point {p!r}")
    return Point3(x, y, z)


def normalize_yaw(angle: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    if not math.isfinite(angle):
        raise ValueError(f"cannot normalize non-finite angle {angle!r}")
    a = math.fmod(angle + math.pi, TWO_PI)
    if a < 0.0:
        a += TWO_PI
    a -= math.pi
    # fmod rounding can land exactly on +pi
    if a >= math.pi:
        a -= TWO_PI
    return a


@dataclass(frozen=True)
class ViewPose:
    """Camera pose: position plus yaw and pitch. Roll is never used."""

    position: Point3
    yaw: float = 0.0
    pitch: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", as_point(self.position))
        object.__setattr__(self, "yaw", normalize_yaw(float(self.yaw)))
        pitch = float(self.pitch)
        if not (-math.pi / 2 <= pitch <= math.pi / 2):
            raise ValueError(f"pitch {pitch} outside [-pi/2, pi/2]")
        object.__setattr__(self, "pitch", pitch)

    def direction(self) -> np.ndarray:
        """Unit viewing direction."""
        cp = math.cos(self.pitch)
        return np.array([cp * math.cos(self.yaw), cp * math.sin(self.yaw), math.sin(self.pitch)])


@dataclass(frozen=True)
class Aabb:
    min: Point3
    max: Point3

    def __post_init__(self):
        lo, hi = as_point(self.min), as_point(self.max)
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box: min {lo} > max {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def size(self) -> np.ndarray:
        return np.subtract(self.max, self.min)

    @property
    def center(self) -> Point3:
        return Point3(*((np.add(self.min, self.max)) / 2.0))

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    def contains(self, p) -> bool:
        return point_in_aabb(p, self)

    def contains_box(self, other: "Aabb") -> bool:
        return all(a <= b for a, b in zip(self.min, other.min)) and all(
            a >= b for a, b in zip(self.max, other.max)
        )

    def padded(self, pad: float) -> "Aabb":
        return Aabb(tuple(v - pad for v in self.min), tuple(v + pad for v in self.max))

    def as_array(self) -> np.ndarray:
        """(2, 3) array of [min, max]."""
        return np.array([self.min, self.max], dtype=float)


def point_in_aabb(p, b: Aabb) -> bool:
    """Closed-box membership."""
    return all(lo <= v <= hi for v, lo, hi in zip(p, b.min, b.max))


@dataclass(frozen=True)
class Scene:
    boxes: tuple[Aabb, ...] = ()
    ground_z: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        for b in self.boxes:
            if np.any(b.size <= 0.0):
                raise ValueError(f"obstacle box {b} has zero volume")
            if b.min.z < self.ground_z - 1e-9:
                raise ValueError(f"obstacle box {b} extends below ground")

    def box_array(self) -> np.ndarray:
        """(n, 2, 3) float array of box corners."""
        if not self.boxes:
            return np.zeros((0, 2, 3))
        return np.stack([b.as_array() for b in self.boxes])


class Mode(enum.Enum):
    EXPLORE_INSPECT = "explore_inspect"
    EXPLORE = "explore"


class GainThreshold(enum.Enum):
    FIXED = "fixed"
    VARIABLE = "variable"


class Sampling(enum.Enum):
    WGS = "wgs"
    AEPS = "aeps"


class CacheMode(enum.Enum):
    FILTERED = "filtered"
    UNFILTERED = "unfiltered"


class Utility(enum.Enum):
    WEIGHTED = "weighted"
    EXPONENTIAL = "exponential"
    LINEAR = "linear"


class ArmMode(enum.Enum):
    MOBILE = "mobile"
    STATIONARY = "stationary"


@dataclass(frozen=True)
class Flags:
    """Ablation switches. Defaults are the full planner."""

    gain_threshold: GainThreshold = GainThreshold.VARIABLE
    sampling: Sampling = Sampling.WGS
    cache: CacheMode = CacheMode.FILTERED
    utility: Utility = Utility.WEIGHTED
    arm: ArmMode = ArmMode.MOBILE

    def label(self) -> str:
        return "-".join(
            v.value for v in (self.gain_threshold, self.sampling, self.cache, self.utility, self.arm)
        )


@dataclass(frozen=True)
class ScenarioConfig:
    scene: Scene
    exploration_bounds: Aabb
    roi: Aabb
    intensity_samples: tuple = ()
    robot_start: tuple = (0.0, 0.0, 0.0)  # base x, y, heading
    rng_seed: int = 0
    mode: Mode = Mode.EXPLORE_INSPECT
    flags: Flags = field(default_factory=Flags)
    name: str = "scenario"
    max_iterations: int = 300
    max_sim_time: float = 3600.0

    def __post_init__(self):
        if not self.exploration_bounds.contains_box(self.roi):
            raise ValueError("ROI is not contained in the exploration bounds")
        x, y, _ = self.robot_start
        b = self.exploration_bounds
        if not (b.min.x <= x <= b.max.x and b.min.y <= y <= b.max.y):
            raise ValueError("robot start lies outside the exploration bounds")
        object.__setattr__(
            self,
            "intensity_samples",
            tuple((as_point(p), float(v)) for p, v in self.intensity_samples),
        )
