import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbvplan import (
    Aabb,
    CacheMode,
    GainThreshold,
    GainWeights,
    IntensityMap,
    Mode,
    OccupancyMap,
    PlannerConfig,
    Point3,
    RayMarchSpec,
    Sampling,
    ViewPose,
    VisitedSet,
)
from nbvplan.gain import GainBreakdown, GainContext
from nbvplan.rrt import (
    CacheEntry,
    CacheSet,
    RrtNode,
    RrtTree,
    assign_orientation,
    best_node,
    expand_tree,
    extract_branch,
    merge_into_cache,
    refilter_cache,
    sample_position,
    steer,
    try_add_node,
)

from helpers import MODEL, fill_known

BOUNDS = Aabb((0, 0, 0), (6, 6, 2))
SPEC = RayMarchSpec.default_for(0.1, MODEL.r_max)
ZERO = GainBreakdown(0.0, 0.0, 0.0, 0.0)


def ctx_for(occ, mode=Mode.EXPLORE_INSPECT, intensity=None):
    return GainContext(occ, intensity, VisitedSet(), GainWeights(), mode, MODEL, SPEC, BOUNDS)


def root_tree(p=(3.0, 3.0, 1.0)):
    return RrtTree(RrtNode(0, ViewPose(p), None, ZERO, 0.0, 0.0, 0.0))


def test_wgs_samples_on_upper_hemisphere():
    rng = np.random.default_rng(0)
    base = np.array([5.0, 5.0, 1.0])
    big = Aabb((-10, -10, -10), (20, 20, 20))
    for _ in range(500):
        p = np.asarray(sample_position(Sampling.WGS, base, 1.5, big, rng))
        assert np.linalg.norm(p - base) == pytest.approx(1.5)
        assert p[2] >= base[2]
        assert np.linalg.norm(p - base) > 1.3  # beyond the arm reach by design


def test_wgs_clamps_into_bounds():
    rng = np.random.default_rng(1)
    for _ in range(200):
        assert BOUNDS.contains(sample_position(Sampling.WGS, (0.2, 0.2, 1.9), 1.5, BOUNDS, rng))


def test_aeps_is_uniform_over_bounds():
    rng = np.random.default_rng(2)
    pts = np.array([sample_position(Sampling.AEPS, (0, 0, 0), 1.5, BOUNDS, rng) for _ in range(10_000)])
    size = BOUNDS.size
    sigma = size / math.sqrt(12) / math.sqrt(len(pts))
    assert np.all(np.abs(pts.mean(axis=0) - np.asarray(BOUNDS.center)) < 3 * sigma)


def test_steer_examples():
    assert steer((0, 0, 1), (2, 0, 1), 0.5) == Point3(0.5, 0.0, 1.0)
    assert steer((0, 0, 1), (0.3, 0, 1), 0.5) == Point3(0.3, 0.0, 1.0)
    with pytest.raises(ValueError):
        steer((1, 1, 1), (1, 1, 1), 0.5)


coords = st.floats(-10, 10, allow_nan=False)


@given(st.tuples(coords, coords, coords), st.tuples(coords, coords, coords), st.floats(0.05, 3.0))
def test_steer_property(a, b, l):
    if math.dist(a, b) < 1e-9:
        return
    q = np.asarray(steer(a, b, l))
    a, b = np.asarray(a), np.asarray(b)
    assert np.linalg.norm(q - a) <= l + 1e-9
    # collinear with a -> b and not past b
    d = b - a
    t = (q - a) @ d / (d @ d)
    assert -1e-9 <= t <= 1 + 1e-9
    assert np.linalg.norm(a + t * d - q) <= 1e-6 * max(1.0, np.linalg.norm(d))


def _linear_field(occ, axis, c=1.0):
    g = np.meshgrid(*(occ.layout.centers(a) for a in range(3)), indexing="ij")
    return IntensityMap(occ.layout, c * (g[axis] - occ.layout.origin[axis]))


def test_explore_mode_orientation_is_level():
    occ = OccupancyMap.for_bounds(BOUNDS, 0.1, 0.0)
    yaw, pitch, g_f = assign_orientation((3, 3, 1), Mode.EXPLORE, ctx_for(occ, Mode.EXPLORE), None, (-0.6, 0.6))
    assert pitch == 0.0 and g_f is not None


def test_gradient_orientation():
    occ = OccupancyMap.for_bounds(BOUNDS, 0.1, 0.0)
    ctx = ctx_for(occ)
    yaw, pitch, _ = assign_orientation((3.02, 3.01, 1.03), Mode.EXPLORE_INSPECT, ctx, _linear_field(occ, 0), (-0.6, 0.6))
    assert (yaw, pitch) == pytest.approx((0.0, 0.0), abs=1e-9)
    yaw, pitch, _ = assign_orientation((3.02, 3.01, 1.03), Mode.EXPLORE_INSPECT, ctx, _linear_field(occ, 2), (-0.6, 0.6))
    assert pitch == 0.6
    assert yaw == pytest.approx(ctx.best_yaw((3.02, 3.01, 1.03))[0])


def test_try_add_node_rules():
    occ = fill_known(OccupancyMap.for_bounds(BOUNDS, 0.1, 0.0))
    tree = root_tree()
    assert not try_add_node(tree, occ, BOUNDS, ViewPose((7, 3, 1)), 0, 0.3, 0.25)
    assert not try_add_node(tree, occ, BOUNDS, ViewPose((3.1, 3, 1)), 0, 0.3, 0.25)
    occ.log_odds[32, 30, 10] = 1.0
    assert not try_add_node(tree, occ, BOUNDS, ViewPose((3.4, 3.0, 1.0)), 0, 0.3, 0.25)
    assert try_add_node(tree, occ, BOUNDS, ViewPose((3.0, 3.45, 1.0)), 0, 0.3, 0.25)
    assert len(tree) == 2


def _expand(occ, seed=0, config=PlannerConfig(), sampling=Sampling.WGS, mode=Mode.EXPLORE):
    return expand_tree(
        ViewPose((3.0, 3.0, 1.0)), ctx_for(occ, mode), config, sampling, (3.0, 3.0, 0.5),
        Aabb((0, 0, 0.4), (6, 6, 1.4)), np.random.default_rng(seed),
    )


def test_blocked_surroundings_give_root_only_tree():
    occ = OccupancyMap.for_bounds(BOUNDS, 0.1, 0.0)
    occ.log_odds[...] = 2.0
    assert len(_expand(occ)) == 1


@pytest.mark.parametrize("sampling", list(Sampling))
def test_open_world_tree_invariants(sampling):
    occ = fill_known(OccupancyMap.for_bounds(BOUNDS, 0.1, 0.0))
    cfg = PlannerConfig()
    tree = _expand(occ, 3, cfg, sampling)
    assert 1 < len(tree) <= cfg.max_nodes
    pos = tree.positions
    d = np.linalg.norm(pos[:, None] - pos[None], axis=2)
    np.fill_diagonal(d, np.inf)
    assert d.min() >= cfg.min_node_distance
    for parent, child in tree.edges():
        assert tree.nodes[child].edge_length <= cfg.step_size + 1e-9
        assert occ.is_segment_free(pos[parent], pos[child], cfg.collision_radius)


def test_tree_respects_node_cap():
    occ = fill_known(OccupancyMap.for_bounds(BOUNDS, 0.1, 0.0))
    assert len(_expand(occ, 0, PlannerConfig(max_nodes=12), Sampling.AEPS)) == 12


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(step_size=0.3, min_node_distance=0.3)


def _entry(score, x=3.0):
    return CacheEntry(ViewPose((x, 3.0, 1.0)), GainBreakdown(0, 0, 0, score), 0.0, score)


def test_refilter_empty_cache_is_noop():
    occ = OccupancyMap.for_bounds(BOUNDS, 0.1, 0.0)
    cache = CacheSet(30, 0.2, 0.1)
    refilter_cache(cache, ctx_for(occ), CacheMode.FILTERED, GainThreshold.VARIABLE)
    assert cache.entries == [] and cache.g_min == 0.2


def test_refilter_filtered_variable_keeps_top_k():
    occ = OccupancyMap.for_bounds(BOUNDS, 0.1, 0.0)
    rng = np.random.default_rng(0)
    cache = CacheSet(30, 0.0, 0.0)
    cache.entries = [
        CacheEntry(ViewPose(tuple(rng.uniform([0.5, 0.5, 0.5], [5.5, 5.5, 1.5])), rng.uniform(-3, 3)), ZERO, 0.0, 1.0)
        for _ in range(100)
    ]
    refilter_cache(cache, ctx_for(occ), CacheMode.FILTERED, GainThreshold.VARIABLE)
    assert len(cache.entries) == 30
    assert cache.g_min == min(e.score for e in cache.entries)
    assert [e.score for e in cache.entries] == sorted((e.score for e in cache.entries), reverse=True)


def test_explored_entries_drop_out():
    occ = OccupancyMap.for_bounds(BOUNDS, 0.1, 0.0)
    occ.log_odds[:30] = -1.0  # x < 3 fully explored
    cache = CacheSet(2, 0.0, 0.0)
    cache.entries = [_entry(50.0, 1.0), _entry(50.0, 1.5), _entry(1.0, 4.5), _entry(1.0, 5.0)]
    refilter_cache(cache, ctx_for(occ), CacheMode.FILTERED, GainThreshold.FIXED)
    assert all(e.pose.position.x > 3 for e in cache.entries)
    assert cache.g_min == 0.0  # fixed threshold never moves


def test_unfiltered_refilter_only_rescores_nearby():
    occ = fill_known(OccupancyMap.for_bounds(BOUNDS, 0.1, 0.0))
    cache = CacheSet(2, 0.0, 0.0)
    cache.entries = [_entry(9.0, 1.0), _entry(9.0, 5.5)]
    refilter_cache(cache, ctx_for(occ), CacheMode.UNFILTERED, GainThreshold.FIXED, robot_position=(1.0, 3.0, 1.0), radius=2.0)
    assert [e.score for e in cache.entries] == [0.0, 9.0]


def test_merge_into_cache():
    tree = root_tree()
    tree.add(ViewPose((3.4, 3, 1)), 0, GainBreakdown(0, 0, 0, 5.0))
    tree.add(ViewPose((3.8, 3, 1)), 1, GainBreakdown(0, 0, 0, 0.01))
    cache = CacheSet(30, 0.1, 0.1)
    merge_into_cache(cache, tree, CacheMode.FILTERED)
    assert [e.score for e in cache.entries] == [5.0]


def test_best_node_examples():
    tree = root_tree()
    assert best_node(tree, CacheSet(3, 0, 0)).node_id == 0
    a = tree.add(ViewPose((3.4, 3, 1)), 0, GainBreakdown(0, 0, 0, 2.0))
    b = tree.add(ViewPose((3.4, 3.4, 1)), 0, GainBreakdown(0, 0, 0, 2.0))
    tree.add(ViewPose((3.8, 3.4, 1)), b.id, GainBreakdown(0, 0, 0, 2.0))
    assert best_node(tree).node_id == a.id  # shorter branch wins the tie
    cache = CacheSet(3, 0, 0, [_entry(9.0, 5.0)])
    sel = best_node(tree, cache)
    assert sel.from_cache and sel.score == 9.0
    assert best_node(tree, cache, exclude=lambda q: q == cache.entries[0].pose).node_id == a.id


def test_extract_branch():
    tree = root_tree()
    c1 = tree.add(ViewPose((3.4, 3, 1)), 0, ZERO)
    c2 = tree.add(ViewPose((3.8, 3, 1)), c1.id, ZERO)
    c3 = tree.add(ViewPose((4.2, 3, 1)), c2.id, ZERO)
    assert extract_branch(tree, c1.id) == [c1.pose]
    assert extract_branch(tree, c3.id) == [c1.pose, c2.pose, c3.pose]
    with pytest.raises(KeyError):
        extract_branch(tree, 9)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_branch_edges_are_tree_edges(seed):
    occ = fill_known(OccupancyMap.for_bounds(BOUNDS, 0.1, 0.0))
    tree = _expand(occ, seed, PlannerConfig(max_nodes=40))
    target = len(tree) - 1
    branch = extract_branch(tree, target)
    edges = set(tree.edges())
    ids = [0] + [next(n.id for n in tree.nodes if n.pose == p) for p in branch]
    assert all((a, b) in edges for a, b in zip(ids[:-1], ids[1:]))
