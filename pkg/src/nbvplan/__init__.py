"""Next-best-view planning for 3D exploration and inspection with a mobile manipulator.

A weighted-sum utility combines unknown volume in the camera wedge, a prior
contamination intensity and a revisit penalty; an RRT of camera poses grown
around the arm base supplies candidates, and the arm is preferred over the
base whenever the next views lie inside its workspace.
"""

import logging

from .geometry import (
    Aabb,
    ArmMode,
    CacheMode,
    Flags,
    GainThreshold,
    Mode,
    Point3,
    Sampling,
    ScenarioConfig,
    Scene,
    Utility,
    ViewPose,
    normalize_yaw,
    point_in_aabb,
)
from .occupancy import GridLayout, OccupancyMap, PositioningError, SensorModel, VoxelState
from .sensor import CameraModel, DepthImage, RenderError, ray_hit, render_depth
from .intensity import IntensityMap, build_intensity
from .gain import (
    GainBreakdown,
    GainWeights,
    RayMarchSpec,
    VisitedSet,
    best_yaw,
    cell_volume,
    discounted_score,
    free_space_gain,
    visited_penalty,
    weighted_gain,
)
from .rrt import CacheSet, PlannerConfig, RrtTree, best_node, expand_tree, extract_branch, refilter_cache
from .robot import ArmWorkspace, BasePose, MotionCostModel, NavigationError, RobotState
from .mission import Action, IterationRecord, MissionParams, compute_metrics, run_iteration, run_mission
from .scenario import ScenarioError, load_scenario

logging.getLogger(__name__).addHandler(logging.NullHandler())

__version__ = "0.1.0"
