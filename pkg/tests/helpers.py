"""Shared builders for the test suite."""

import math

import numpy as np

from nbvplan import Aabb, CameraModel, OccupancyMap, Scene, ViewPose, render_depth
from nbvplan.sensor import inside_obstacle

MODEL = CameraModel()
SMALL_BOUNDS = Aabb((0, 0, 0), (6, 6, 2))


def random_free_point(rng, scene, lo, hi, margin=0.3):
    while True:
        p = rng.uniform(lo, hi)
        clear = all(
            not (np.all(np.asarray(b.min) - margin <= p) and np.all(p <= np.asarray(b.max) + margin))
            for b in scene.boxes
        )
        if clear:
            return p


def random_scene(rng, bounds=SMALL_BOUNDS):
    lo, hi = np.asarray(bounds.min), np.asarray(bounds.max)
    boxes = []
    for _ in range(rng.integers(4, 10)):
        c = rng.uniform(lo[:2], hi[:2])
        s = rng.uniform(0.2, 1.2, size=2)
        h = rng.uniform(0.3, hi[2])
        boxes.append(Aabb((c[0], c[1], lo[2]), (min(c[0] + s[0], hi[0]), min(c[1] + s[1], hi[1]), lo[2] + h)))
    return Scene(tuple(boxes), float(lo[2]))


def random_pose(rng, scene, bounds=SMALL_BOUNDS):
    lo, hi = np.asarray(bounds.min), np.asarray(bounds.max)
    p = random_free_point(rng, scene, lo + [0.5, 0.5, 0.4], np.array([hi[0] - 0.5, hi[1] - 0.5, min(hi[2], 1.4)]))
    return ViewPose(tuple(p), rng.uniform(-math.pi, math.pi), rng.uniform(-0.6, 0.6))


def random_gain_case(rng, model=MODEL, bounds=SMALL_BOUNDS):
    """A box world partly mapped by a few random scans, plus a query pose in free space."""
    scene = random_scene(rng, bounds)
    occ = OccupancyMap.for_bounds(bounds, 0.1, 0.0)
    for _ in range(rng.integers(2, 8)):
        cam = random_pose(rng, scene, bounds)
        occ.integrate_depth(cam, model, render_depth(scene, cam, model))
    return occ, bounds, random_pose(rng, scene, bounds)


def scan_map(bounds, scene, poses, model=MODEL, resolution=0.1, pad=0.0):
    occ = OccupancyMap.for_bounds(bounds, resolution, pad)
    for p in poses:
        occ.integrate_depth(p, model, render_depth(scene, p, model))
    return occ


def fill_known(occ, value=-1.0):
    occ.log_odds[...] = value
    return occ


def assert_not_inside(scene, p):
    assert not inside_obstacle(scene, p)
