"""View-pose RRT: sampling, steering, orientation, cached nodes and selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .gain import GainBreakdown, GainContext, discounted_score
from .geometry import (
    Aabb,
    CacheMode,
    GainThreshold,
    Mode,
    Point3,
    Sampling,
    Utility,
    ViewPose,
    point_in_aabb,
)
from .intensity import gradient_direction


@dataclass(frozen=True)
class PlannerConfig:
    step_size: float = 0.5  # l
    max_tries: int = 50  # N
    max_nodes: int = 600  # N_max
    min_node_distance: float = 0.3  # d
    collision_radius: float = 0.25  # r_b
    cache_capacity: int = 30  # K
    sampling_radius: float = 1.5
    g_min_voxels: int = 5
    yaw_step: float = math.radians(10.0)
    discount_rate: float = 0.25  # lambda
    unfiltered_radius: float = 5.0
    # Unknown space this close to the current camera is treated as traversable:
    # the camera cannot see inside r_min, padded by the collision radius.
    root_clearance: float = 0.55

    def __post_init__(self):
        if not self.min_node_distance < self.step_size:
            raise ValueError("minimum node distance d must be smaller than the step size l")

    def initial_g_min(self, resolution: float, w_f: float) -> float:
        return self.g_min_voxels * resolution**3 * w_f


@dataclass
class RrtNode:
    id: int
    pose: ViewPose
    parent: Optional[int]
    gain: GainBreakdown
    branch_length: float
    edge_length: float
    score: float


class RrtTree:
    """Node store with exact nearest-neighbour search over a position array."""

    def __init__(self, root: RrtNode, capacity: int = 601):
        self.nodes: list[RrtNode] = [root]
        self._pos = np.zeros((max(capacity, 1), 3))
        self._pos[0] = root.pose.position
        self.root_id = root.id

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def positions(self) -> np.ndarray:
        return self._pos[: len(self.nodes)]

    def nearest(self, p) -> int:
        d = np.sum((self.positions - np.asarray(p)) ** 2, axis=1)
        return int(np.argmin(d))

    def min_distance(self, p) -> float:
        return float(np.sqrt(np.min(np.sum((self.positions - np.asarray(p)) ** 2, axis=1))))

    def add(self, pose: ViewPose, parent: int, gain: GainBreakdown, score_fn=None) -> RrtNode:
        par = self.nodes[parent]
        edge = pose.position.distance(par.pose.position)
        score = gain.total if score_fn is None else score_fn(gain.total, edge)
        node = RrtNode(len(self.nodes), pose, parent, gain, par.branch_length + edge, edge, score)
        if len(self.nodes) == len(self._pos):
            self._pos = np.vstack([self._pos, np.zeros_like(self._pos)])
        self._pos[len(self.nodes)] = pose.position
        self.nodes.append(node)
        return node

    def edges(self):
        for n in self.nodes:
            if n.parent is not None:
                yield n.parent, n.id


def sample_position(sampling: Sampling, arm_base, radius: float, bounds: Aabb, rng: np.random.Generator) -> Point3:
    if sampling is Sampling.WGS:
        # uniform on the upper hemisphere: z uniform by Archimedes' theorem
        z = rng.uniform(0.0, 1.0)
        az = rng.uniform(0.0, 2 * math.pi)
        s = math.sqrt(max(0.0, 1.0 - z * z))
        p = np.asarray(arm_base) + radius * np.array([s * math.cos(az), s * math.sin(az), z])
        p = np.clip(p, bounds.min, bounds.max)
    else:
        p = rng.uniform(bounds.min, bounds.max)
    return Point3(*p)


def steer(q_near, q_rand, l: float) -> Point3:
    a = np.asarray(q_near, dtype=float)
    v = np.asarray(q_rand, dtype=float) - a
    dist = float(np.linalg.norm(v))
    if dist == 0.0:
        raise ValueError("q_near and q_rand coincide")
    if dist <= l:
        return Point3(*map(float, q_rand))
    return Point3(*(a + v * (l / dist)))


def clamp_pitch(pitch: float, limits: tuple[float, float]) -> float:
    return min(max(pitch, limits[0]), limits[1])


def assign_orientation(position, mode: Mode, ctx: GainContext, intensity, pitch_limits, yaw_step=math.radians(10.0)):
    """Pick (yaw, pitch) for a sampled position.

    Returns (yaw, pitch, g_f) where g_f is the free-space gain at that
    orientation when it was computed along the way, else None.
    """
    if mode is Mode.EXPLORE_INSPECT and intensity is not None:
        direction = gradient_direction(intensity.gradient_at(position))
        if direction is not None:
            yaw, elev = direction
            grad_xy_vertical = abs(abs(elev) - math.pi / 2) < 1e-9
            if not grad_xy_vertical:
                return yaw, clamp_pitch(elev, pitch_limits), None
            yaw, _ = ctx.best_yaw(position, yaw_step)
            return yaw, clamp_pitch(elev, pitch_limits), None
    yaw, g_f = ctx.best_yaw(position, yaw_step)
    return yaw, 0.0, g_f


def candidate_ok(tree: RrtTree, occ, bounds: Aabb, position, near_id: int, d: float, r_b: float, root_clearance: float = 0.0) -> bool:
    """Acceptance test for a new node: bounds, spacing, then collision."""
    if not point_in_aabb(position, bounds):
        return False
    if tree.min_distance(position) < d:
        return False
    zone = (tree.nodes[tree.root_id].pose.position, root_clearance) if root_clearance > 0 else None
    return occ.is_segment_free(tree.nodes[near_id].pose.position, position, r_b, zone)


def try_add_node(tree, occ, bounds, candidate: ViewPose, near_id: int, d: float, r_b: float, gain: GainBreakdown | None = None, score_fn=None, root_clearance: float = 0.0) -> bool:
    if not candidate_ok(tree, occ, bounds, candidate.position, near_id, d, r_b, root_clearance):
        return False
    tree.add(candidate, near_id, gain or GainBreakdown(0.0, 0.0, 0.0, 0.0), score_fn)
    return True


def score_function(utility: Utility, lam: float) -> Callable[[float, float], float]:
    return lambda total, edge: discounted_score(total, edge, utility, lam)


def expand_tree(
    root_pose: ViewPose,
    ctx: GainContext,
    config: PlannerConfig,
    sampling: Sampling,
    arm_base,
    node_bounds: Aabb,
    rng: np.random.Generator,
    intensity=None,
    pitch_limits=(-0.6, 0.6),
    utility: Utility = Utility.WEIGHTED,
) -> RrtTree:
    """Grow a fresh tree from the current camera pose.

    Each new node may take up to N sampling tries; the expansion ends when a
    node cannot be placed within N tries, when N_max nodes exist, or when
    N_max * N tries have been spent.
    """
    score_fn = score_function(utility, config.discount_rate)
    root_gain = ctx.evaluate(root_pose)
    root = RrtNode(0, root_pose, None, root_gain, 0.0, 0.0, root_gain.total)
    tree = RrtTree(root, config.max_nodes + 1)
    occ = ctx.occ
    budget = config.max_nodes * config.max_tries
    used = 0
    while len(tree) < config.max_nodes and used < budget:
        added = False
        for _ in range(config.max_tries):
            if used >= budget:
                break
            used += 1
            q_rand = sample_position(sampling, arm_base, config.sampling_radius, node_bounds, rng)
            near = tree.nearest(q_rand)
            try:
                q_new = steer(tree.nodes[near].pose.position, q_rand, config.step_size)
            except ValueError:
                continue
            if not candidate_ok(
                tree, occ, node_bounds, q_new, near,
                config.min_node_distance, config.collision_radius, config.root_clearance,
            ):
                continue
            yaw, pitch, g_f = assign_orientation(q_new, ctx.mode, ctx, intensity, pitch_limits, config.yaw_step)
            pose = ViewPose(q_new, yaw, pitch)
            tree.add(pose, near, ctx.evaluate(pose, g_f), score_fn)
            added = True
            break
        if not added:
            break
    return tree


def extract_branch(tree: RrtTree, target: int) -> list[ViewPose]:
    """Poses from the root's child down to `target`, root excluded."""
    if not 0 <= target < len(tree):
        raise KeyError(f"node {target} not in tree")
    out = []
    node = tree.nodes[target]
    while node.parent is not None:
        out.append(node.pose)
        node = tree.nodes[node.parent]
    out.reverse()
    return out


@dataclass
class CacheEntry:
    pose: ViewPose
    gain: GainBreakdown
    edge_length: float
    score: float


@dataclass
class CacheSet:
    capacity: int
    g_min: float
    g_init: float
    entries: list[CacheEntry] = field(default_factory=list)


def _rescore(cache_entries, ctx: GainContext, utility: Utility, lam: float) -> list[CacheEntry]:
    gains = ctx.evaluate_many([e.pose for e in cache_entries])
    return [
        CacheEntry(e.pose, g, e.edge_length, discounted_score(g.total, e.edge_length, utility, lam))
        for e, g in zip(cache_entries, gains)
    ]


def refilter_cache(
    cache: CacheSet,
    ctx: GainContext,
    cache_mode: CacheMode,
    threshold_mode: GainThreshold,
    robot_position=None,
    radius: float = 5.0,
    utility: Utility = Utility.WEIGHTED,
    lam: float = 0.25,
) -> CacheSet:
    """Re-score cached poses against the current map; mutates and returns `cache`."""
    if not cache.entries:
        return cache
    if cache_mode is CacheMode.FILTERED:
        fresh = _rescore([e for e in cache.entries if e.score > cache.g_min], ctx, utility, lam)
        fresh.sort(key=lambda e: -e.score)
        cache.entries = fresh[: cache.capacity]
    else:
        p = np.asarray(robot_position, dtype=float)
        due = [
            i for i, e in enumerate(cache.entries)
            if e.score > cache.g_min and np.linalg.norm(np.asarray(e.pose.position) - p) <= radius
        ]
        for i, e in zip(due, _rescore([cache.entries[i] for i in due], ctx, utility, lam)):
            cache.entries[i] = e
    if threshold_mode is GainThreshold.VARIABLE:
        cache.g_min = min((e.score for e in cache.entries), default=cache.g_init)
    return cache


def merge_into_cache(cache: CacheSet, tree: RrtTree, cache_mode: CacheMode) -> CacheSet:
    """Store tree nodes scoring above g_min; filtered caches keep the top K."""
    new = [
        CacheEntry(n.pose, n.gain, n.edge_length, n.score)
        for n in tree.nodes
        if n.parent is not None and n.score > cache.g_min
    ]
    cache.entries.extend(new)
    if cache_mode is CacheMode.FILTERED:
        cache.entries.sort(key=lambda e: -e.score)
        del cache.entries[cache.capacity:]
    return cache


@dataclass(frozen=True)
class Selection:
    pose: ViewPose
    score: float
    gain: GainBreakdown
    node_id: Optional[int]  # None for a cache entry

    @property
    def from_cache(self) -> bool:
        return self.node_id is None


def best_node(tree: RrtTree, cache: CacheSet | None = None, exclude: Callable[[ViewPose], bool] | None = None) -> Selection | None:
    """Highest-scoring pose over tree nodes and cache entries.

    Ties go to the shorter branch, then the lower id; cache entries rank
    after tree nodes on ties.
    """
    best_key, best = None, None
    for n in tree.nodes:
        if exclude is not None and exclude(n.pose):
            continue
        key = (-n.score, n.branch_length, n.id)
        if best_key is None or key < best_key:
            best_key, best = key, Selection(n.pose, n.score, n.gain, n.id)
    if cache is not None:
        for i, e in enumerate(cache.entries):
            if exclude is not None and exclude(e.pose):
                continue
            key = (-e.score, math.inf, len(tree) + i)
            if best_key is None or key < best_key:
                best_key, best = key, Selection(e.pose, e.score, e.gain, None)
    return best
