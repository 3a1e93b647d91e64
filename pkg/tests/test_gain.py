import math

import numpy as np
import pytest

from nbvplan import (
    Aabb,
    GainWeights,
    IntensityMap,
    Mode,
    OccupancyMap,
    RayMarchSpec,
    Utility,
    ViewPose,
    VisitedSet,
    best_yaw,
    cell_volume,
    discounted_score,
    free_space_gain,
    visited_penalty,
    weighted_gain,
)
from nbvplan.gain import GainContext, free_space_gains
from nbvplan.oracles import OracleReport, exhaustive_yaw_oracle, frustum_unknown_volume_oracle, wedge_volume

from helpers import MODEL, fill_known, random_gain_case

SPEC = RayMarchSpec.default_for(0.1, MODEL.r_max)
OPEN = Aabb((0, 0, 0), (6, 6, 4))
CENTRE = ViewPose((3.03, 3.02, 2.01), 0.3, -0.2)


def sphere_sum(R, spec):
    """Sum of cell volumes over a full (r, theta, phi) partition of a ball."""
    n_r = int(round(R / spec.delta_r))
    n_t = int(round(2 * math.pi / spec.delta_theta))
    n_p = int(round(math.pi / spec.delta_phi))
    s = RayMarchSpec(R / n_r, 2 * math.pi / n_t, math.pi / n_p)
    phis = (np.arange(n_p) + 0.5) * s.delta_phi
    rs = (np.arange(n_r) + 0.5) * s.delta_r
    return n_t * sum(cell_volume(r, p, s) for r in rs for p in phis)


def test_cell_volume_examples():
    s = RayMarchSpec(0.1, 0.05, 0.04)
    assert cell_volume(0.0, 1.0, s) == pytest.approx(0.1**3 / 6 * 0.05 * math.sin(1.0) * math.sin(0.02))
    assert cell_volume(0.7, 0.0, s) == 0.0


@pytest.mark.parametrize("R", [0.5, 1.0, 1.5])
def test_sphere_partition(R):
    assert sphere_sum(R, SPEC) == pytest.approx(4 / 3 * math.pi * R**3, rel=0.01)


def test_spec_check():
    SPEC.check(0.1, 1.5)
    with pytest.raises(ValueError):
        RayMarchSpec(0.2, 0.05, 0.05).check(0.1, 1.5)
    with pytest.raises(ValueError):
        RayMarchSpec(0.1, 0.1, 0.05).check(0.1, 1.5)


def test_fully_known_map_has_zero_gain():
    occ = fill_known(OccupancyMap.for_bounds(OPEN, 0.1, 0.0))
    assert free_space_gain(occ, CENTRE, MODEL, SPEC, OPEN) == 0.0


def test_fully_unknown_wedge():
    occ = OccupancyMap.for_bounds(OPEN, 0.1, 0.0)
    g = free_space_gain(occ, CENTRE, MODEL, SPEC, OPEN)
    oracle = frustum_unknown_volume_oracle(occ, CENTRE, MODEL, OPEN)
    assert OracleReport.compare("wedge", oracle, g).within(0.03)
    assert g == pytest.approx(wedge_volume(MODEL.r_max, MODEL.h_fov, MODEL.v_fov, CENTRE.pitch), rel=0.01)


def test_wall_truncates_wedge():
    occ = OccupancyMap.for_bounds(OPEN, 0.1, 0.0)
    pose = ViewPose((3.0, 3.05, 2.05), 0.0, 0.0)
    occ.log_odds[35, :, :] = 1.0  # voxel slab x in [3.5, 3.6): 0.5 m ahead
    g = free_space_gain(occ, pose, MODEL, SPEC, OPEN)
    oracle = frustum_unknown_volume_oracle(occ, pose, MODEL, OPEN)
    assert OracleReport.compare("wall", oracle, g).within(0.03)
    assert g < wedge_volume(0.6, MODEL.h_fov, MODEL.v_fov)


def test_bounds_clip_the_wedge():
    occ = OccupancyMap.for_bounds(OPEN, 0.1, 0.0)
    pose = ViewPose((5.5, 3.0, 2.0), 0.0, 0.0)
    g = free_space_gain(occ, pose, MODEL, SPEC, OPEN)
    assert g < 0.5 * wedge_volume(MODEL.r_max, MODEL.h_fov, MODEL.v_fov)
    assert OracleReport.compare("clip", frustum_unknown_volume_oracle(occ, pose, MODEL, OPEN), g).within(0.03)


def test_batched_gains_match_single():
    occ, bounds, pose = random_gain_case(np.random.default_rng(5))
    poses = [pose, ViewPose(pose.position, pose.yaw + 1.0, 0.0), ViewPose(pose.position, -2.0, -0.4)]
    batch = free_space_gains(occ, poses, MODEL, SPEC, bounds)
    np.testing.assert_allclose(batch, [free_space_gain(occ, p, MODEL, SPEC, bounds) for p in poses])


def test_best_yaw_isotropic_is_consistent():
    occ = OccupancyMap.for_bounds(OPEN, 0.1, 0.0)
    p = (3.0, 3.0, 2.0)
    yaw, g = best_yaw(occ, p, MODEL, SPEC, OPEN)
    assert g == free_space_gain(occ, ViewPose(p, yaw, 0.0), MODEL, SPEC, OPEN)
    _, g_oracle = exhaustive_yaw_oracle(occ, p, MODEL, SPEC, OPEN, math.radians(10))
    assert g == pytest.approx(g_oracle, rel=1e-9)


def test_best_yaw_half_space():
    occ = fill_known(OccupancyMap.for_bounds(OPEN, 0.1, 0.0))
    occ.log_odds[30:, :, :] = np.nan  # unknown only for x >= 3.0, camera 0.5 m short of it
    step = math.radians(10)
    yaw, _ = best_yaw(occ, (2.5, 3.0, 2.0), MODEL, SPEC, OPEN, step)
    assert abs(yaw) <= step + 1e-9
    oracle_yaw, _ = exhaustive_yaw_oracle(occ, (2.5, 3.0, 2.0), MODEL, SPEC, OPEN, step)
    assert abs(math.remainder(yaw - oracle_yaw, 2 * math.pi)) <= step + 1e-9


def test_best_yaw_against_exhaustive_oracle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        occ, bounds, pose = random_gain_case(rng)
        _, g = best_yaw(occ, pose.position, MODEL, SPEC, bounds)
        _, g_oracle = exhaustive_yaw_oracle(occ, pose.position, MODEL, SPEC, bounds, math.radians(10))
        assert g >= 0.99 * g_oracle


def test_best_yaw_rejects_odd_steps():
    occ = OccupancyMap.for_bounds(OPEN, 0.1, 0.0)
    with pytest.raises(ValueError):
        best_yaw(occ, (3, 3, 2), MODEL, SPEC, OPEN, 1.0)


def test_visited_penalty_examples():
    q = ViewPose((1, 1, 1), 0.5, 0.0)
    assert visited_penalty(q, []) == 0.0
    assert visited_penalty(q, [q]) == -1.0
    assert visited_penalty(q, [ViewPose((1.3, 1, 1), 0.5, 0.0)], pos_tol=0.05) == 0.0
    assert visited_penalty(q, [ViewPose((1, 1, 1), 0.5 + math.radians(30), 0.0)]) == 0.0
    vs = VisitedSet()
    vs.add(q)
    assert list(vs.penalties(np.array([q.position, (5, 5, 5)]), np.array([0.5, 0.5]))) == [-1.0, 0.0]


def _context(occ, intensity=None, mode=Mode.EXPLORE_INSPECT, visited=None):
    return GainContext(occ, intensity, visited or VisitedSet(), GainWeights(), mode, MODEL, SPEC, OPEN)


def test_weighted_gain_examples():
    known = fill_known(OccupancyMap.for_bounds(OPEN, 0.1, 0.0))
    zero = IntensityMap.zeros(known.layout)
    pose = ViewPose((3.0, 3.0, 2.0), 0.0, 0.0)
    b = weighted_gain(pose, known, zero, VisitedSet(), GainWeights(), Mode.EXPLORE_INSPECT, MODEL, SPEC, OPEN)
    assert b.total == 0.0

    from nbvplan.gain import combine

    first = combine(2.0, 10.0, 0.0, GainWeights(), Mode.EXPLORE_INSPECT)
    assert first.total == 20.0
    visited = combine(2.0, 10.0, -1.0, GainWeights(), Mode.EXPLORE_INSPECT)
    assert visited.total == first.total - 500.0


def test_explore_mode_ignores_intensity():
    occ = OccupancyMap.for_bounds(OPEN, 0.1, 0.0)
    intensity = IntensityMap(occ.layout, np.full(occ.layout.shape, 3.0))
    ctx = _context(occ, intensity, Mode.EXPLORE)
    b = ctx.evaluate(CENTRE)
    assert b.g_m == 0.0
    assert ctx.evaluate(CENTRE).total == 5.0 * b.g_f


def test_context_batch_matches_single():
    occ, _, pose = random_gain_case(np.random.default_rng(2))
    intensity = IntensityMap(occ.layout, np.random.default_rng(0).uniform(0, 4, occ.layout.shape))
    visited = VisitedSet()
    visited.add(pose)
    ctx = _context(occ, intensity, visited=visited)
    poses = [pose, ViewPose(pose.position, pose.yaw + 2.0, 0.1)]
    for a, b in zip(ctx.evaluate_many(poses), [ctx.evaluate(p) for p in poses]):
        assert a.total == pytest.approx(b.total)
    assert ctx.evaluate(pose).g_v == -1.0


def test_weights_validation():
    with pytest.raises(ValueError):
        GainWeights(-1.0)
    assert GainWeights().scaled(2.0) == GainWeights(10.0, 2.0, 1000.0)


def test_discounted_score_examples():
    for kind in Utility:
        assert discounted_score(7.0, 0.0, kind) == 7.0
    assert discounted_score(10, 0.5, Utility.EXPONENTIAL, 0.25) == pytest.approx(10 * math.exp(-0.125))
    assert discounted_score(10, 0.5, Utility.EXPONENTIAL, 0.25) == pytest.approx(8.825, abs=5e-4)
    assert discounted_score(10, 0.5, Utility.LINEAR, 0.25) == pytest.approx(9.875)
    with pytest.raises(ValueError):
        discounted_score(1.0, -0.1, Utility.LINEAR)
