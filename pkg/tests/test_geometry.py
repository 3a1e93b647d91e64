import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nbvplan import Aabb, Flags, Point3, ScenarioConfig, Scene, ViewPose, normalize_yaw, point_in_aabb


@pytest.mark.parametrize("angle, expected", [(0.0, 0.0), (2 * math.pi, 0.0), (3 * math.pi / 2, -math.pi / 2)])
def test_normalize_yaw_examples(angle, expected):
    assert normalize_yaw(angle) == pytest.approx(expected, abs=1e-12)


@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_normalize_yaw_range_and_equivalence(a):
    w = normalize_yaw(a)
    assert -math.pi <= w < math.pi
    assert math.cos(w) == pytest.approx(math.cos(a), abs=1e-9)
    assert math.sin(w) == pytest.approx(math.sin(a), abs=1e-9)


def test_normalize_yaw_rejects_nan():
    with pytest.raises(ValueError):
        normalize_yaw(float("nan"))


def test_point_in_aabb_examples():
    b = Aabb((-1, -1, -1), (1, 1, 1))
    assert point_in_aabb((0, 0, 0), b)
    assert point_in_aabb((1, 0, 0.5), b)  # closed faces
    assert not point_in_aabb((2, 0, 0), b)


def test_aabb_rejects_inverted_corners():
    with pytest.raises(ValueError):
        Aabb((1, 0, 0), (0, 1, 1))


def test_viewpose_normalizes_and_checks_pitch():
    p = ViewPose((0, 0, 0), 3 * math.pi, 0.1)
    assert p.yaw == pytest.approx(-math.pi)
    with pytest.raises(ValueError):
        ViewPose((0, 0, 0), 0.0, 2.0)
    with pytest.raises(ValueError):
        ViewPose((0, float("inf"), 0))


def test_viewpose_direction_is_unit():
    d = ViewPose((0, 0, 0), 0.7, -0.3).direction()
    assert math.isclose(float((d**2).sum()), 1.0)


def test_scene_rejects_flat_or_buried_boxes():
    with pytest.raises(ValueError):
        Scene((Aabb((0, 0, 0), (1, 1, 0)),))
    with pytest.raises(ValueError):
        Scene((Aabb((0, 0, -1), (1, 1, 1)),), ground_z=0.0)


def test_scenario_config_validates_roi_and_start():
    b = Aabb((0, 0, 0), (4, 4, 2))
    with pytest.raises(ValueError):
        ScenarioConfig(Scene(()), b, Aabb((3, 3, 0), (5, 5, 1)))
    with pytest.raises(ValueError):
        ScenarioConfig(Scene(()), b, b, robot_start=(9.0, 0.0, 0.0))
    sc = ScenarioConfig(Scene(()), b, b, intensity_samples=[((1, 1, 1), 2)], robot_start=(1.0, 1.0, 0.0))
    assert sc.intensity_samples == ((Point3(1.0, 1.0, 1.0), 2.0),)


def test_flags_label_defaults_to_full_planner():
    assert Flags().label() == "variable-wgs-filtered-weighted-mobile"
