"""Explore-inspect mission loop: capture, integrate, plan, dispatch, repeat."""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .gain import GainContext, GainWeights, RayMarchSpec, VisitedSet
from .geometry import Aabb, ArmMode, Mode, ScenarioConfig, ViewPose
from .intensity import IntensityMap, build_intensity
from .occupancy import OccupancyMap
from .robot import (
    ArmWorkspace,
    BasePose,
    MotionCostModel,
    NavigationError,
    RobotState,
    approach,
    execute_views,
    reachable_prefix,
)
from .rrt import (
    CacheSet,
    PlannerConfig,
    best_node,
    expand_tree,
    extract_branch,
    merge_into_cache,
    refilter_cache,
)
from .sensor import CameraModel

log = logging.getLogger(__name__)


class Action(enum.Enum):
    ARM_PREFIX = "arm_prefix"
    DRIVE = "drive"
    TERMINATE = "terminate"


@dataclass(frozen=True)
class MissionParams:
    resolution: float = 0.1
    map_pad: float = 0.2
    camera: CameraModel = field(default_factory=CameraModel)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    workspace: ArmWorkspace = field(default_factory=ArmWorkspace)
    costs: MotionCostModel = field(default_factory=MotionCostModel)
    weights: GainWeights = field(default_factory=GainWeights)
    # exploration mode swaps the free-space and measurement weights
    explore_weights: GainWeights = field(default_factory=lambda: GainWeights(1.0, 5.0, 500.0))
    intensity_radius: float = 1.2
    visited_pos_tol: float = 0.05
    visited_yaw_tol: float = math.radians(10.0)
    footprint_radius: float = 0.45
    body_height: float = 1.4
    standoff_factor: float = 0.7
    blacklist_iterations: int = 1
    # captures at evenly spaced yaws around the arm base before the first plan
    initial_sweep: int = 4

    def ray_spec(self) -> RayMarchSpec:
        return RayMarchSpec.default_for(self.resolution, self.camera.r_max)


@dataclass
class IterationRecord:
    iteration: int
    planning_time_s: float
    sim_time_s: float
    roi_unknown_fraction: float
    env_unknown_fraction: float
    distance_m: float
    tree_size: int
    best_gain: float
    action: Action
    captures: int
    g_min: float
    cache_size: int

    @property
    def roi_pct(self) -> float:
        return 100.0 * (1.0 - self.roi_unknown_fraction)

    @property
    def env_pct(self) -> float:
        return 100.0 * (1.0 - self.env_unknown_fraction)


@dataclass
class MissionState:
    scenario: ScenarioConfig
    params: MissionParams
    occ: OccupancyMap
    intensity: IntensityMap
    robot: RobotState
    visited: VisitedSet
    cache: CacheSet
    rng: np.random.Generator
    baseline_roi: float
    baseline_env: float
    node_bounds: Aabb
    pending: list = field(default_factory=list)
    blacklist: dict = field(default_factory=dict)  # pose -> last iteration it is excluded
    iteration: int = 0
    finished: bool = False
    captures: int = 0

    @property
    def weights(self) -> GainWeights:
        return self.params.explore_weights if self.scenario.mode is Mode.EXPLORE else self.params.weights

    def gain_context(self) -> GainContext:
        p = self.params
        return GainContext(
            self.occ,
            self.intensity if self.scenario.mode is Mode.EXPLORE_INSPECT else None,
            self.visited,
            self.weights,
            self.scenario.mode,
            p.camera,
            p.ray_spec(),
            self.scenario.exploration_bounds,
        )


def viewpoint_bounds(bounds: Aabb, workspace: ArmWorkspace, ground_z: float) -> Aabb:
    """Exploration bounds restricted to the camera's reachable height band."""
    lo = max(bounds.min.z, ground_z + workspace.z_min)
    hi = min(bounds.max.z, ground_z + workspace.z_max)
    if lo > hi:
        lo = hi = min(max(bounds.min.z, ground_z + workspace.z_min), bounds.max.z)
    return Aabb((bounds.min.x, bounds.min.y, lo), (bounds.max.x, bounds.max.y, hi))


def map_region(bounds: Aabb, workspace: ArmWorkspace, ground_z: float) -> Aabb:
    """Exploration bounds stretched vertically so every camera height the arm can take is mapped."""
    lo = min(bounds.min.z, ground_z + workspace.z_min)
    hi = max(bounds.max.z, ground_z + workspace.z_max)
    return Aabb((bounds.min.x, bounds.min.y, lo), (bounds.max.x, bounds.max.y, hi))


def compute_metrics(occ: OccupancyMap, bounds: Aabb, roi: Aabb, baseline_unknown: tuple[float, float]) -> tuple[float, float]:
    """Percent of the initially unknown ROI and environment volume now known."""
    base_roi, base_env = baseline_unknown

    def pct(region, base):
        if base <= 0:
            return 100.0
        return 100.0 * (1.0 - occ.unknown_volume_in(region) / base)

    return pct(roi, base_roi), pct(bounds, base_env)


def init_mission(scenario: ScenarioConfig, params: MissionParams | None = None) -> MissionState:
    params = params or MissionParams()
    x, y, heading = scenario.robot_start
    ground_z = scenario.scene.ground_z
    region = map_region(scenario.exploration_bounds, params.workspace, ground_z)
    occ = OccupancyMap.for_bounds(region, params.resolution, params.map_pad)
    intensity = build_intensity(scenario.intensity_samples, occ.layout, params.intensity_radius)
    robot = RobotState(
        BasePose(x, y, heading),
        params.workspace,
        arm_mode=scenario.flags.arm,
        costs=params.costs,
        ground_z=ground_z,
    )
    weights = params.explore_weights if scenario.mode is Mode.EXPLORE else params.weights
    g_init = params.planner.initial_g_min(params.resolution, weights.w_f)
    baseline = (occ.unknown_volume_in(scenario.roi), occ.unknown_volume_in(scenario.exploration_bounds))
    state = MissionState(
        scenario=scenario,
        params=params,
        occ=occ,
        intensity=intensity,
        robot=robot,
        visited=VisitedSet(params.visited_pos_tol, params.visited_yaw_tol),
        cache=CacheSet(params.planner.cache_capacity, g_init, g_init),
        rng=np.random.default_rng(scenario.rng_seed),
        baseline_roi=baseline[0],
        baseline_env=baseline[1],
        node_bounds=viewpoint_bounds(scenario.exploration_bounds, params.workspace, ground_z),
        pending=initial_sweep(robot, params.initial_sweep),
    )
    return state


def initial_sweep(robot: RobotState, n: int) -> list[ViewPose]:
    """Stow-radius camera poses turning once around the arm base, starting at the current heading."""
    if n <= 1:
        return [robot.camera]
    a = robot.arm_base()
    o = robot.workspace.stow_offset
    out = []
    for k in range(n):
        yaw = robot.base.heading + 2 * math.pi * k / n
        c, s = math.cos(yaw), math.sin(yaw)
        out.append(ViewPose((a.x + c * o.x - s * o.y, a.y + s * o.x + c * o.y, a.z + o.z), yaw, 0.0))
    return out


def _blacklisted(state: MissionState):
    if not state.blacklist:
        return None
    poses = [p for p, until in state.blacklist.items() if until >= state.iteration]
    if not poses:
        return None
    return lambda q: any(q == p for p in poses)


def _planar_distance(robot: RobotState, pose: ViewPose) -> float:
    return math.dist((robot.base.x, robot.base.y), (pose.position.x, pose.position.y))


def run_iteration(state: MissionState) -> tuple[MissionState, IterationRecord]:
    if state.finished:
        raise RuntimeError("mission already finished")
    sc, p = state.scenario, state.params
    flags = sc.flags

    # capture and integrate the poses chosen last iteration
    _, _, n = execute_views(
        state.robot, state.pending, sc.scene, p.camera, state.occ, state.visited,
        p.planner.collision_radius, p.planner.root_clearance,
    )
    state.captures += n
    state.pending = []

    t0 = time.perf_counter()
    ctx = state.gain_context()
    refilter_cache(
        state.cache, ctx, flags.cache, flags.gain_threshold,
        robot_position=state.robot.camera.position, radius=p.planner.unfiltered_radius,
        utility=flags.utility, lam=p.planner.discount_rate,
    )
    tree = expand_tree(
        state.robot.camera,
        ctx,
        p.planner,
        flags.sampling,
        state.robot.arm_base(),
        state.node_bounds,
        state.rng,
        intensity=ctx.intensity,
        pitch_limits=p.workspace.pitch_limits,
        utility=flags.utility,
    )
    best = best_node(tree, state.cache, exclude=_blacklisted(state))
    planning = time.perf_counter() - t0
    merge_into_cache(state.cache, tree, flags.cache)

    if best is None or best.score < state.cache.g_min:
        state.finished = True
        action = Action.TERMINATE
    else:
        branch = [best.pose] if best.from_cache else extract_branch(tree, best.node_id)
        prefix = reachable_prefix(
            branch, state.robot, state.occ, state.visited, p.planner.collision_radius, p.planner.root_clearance
        )
        if prefix:
            state.pending = prefix
            action = Action.ARM_PREFIX
        else:
            action = Action.DRIVE
            standoff = p.standoff_factor * p.workspace.max_reach
            try:
                mobile = state.robot.arm_mode is ArmMode.MOBILE
                if mobile and _planar_distance(state.robot, best.pose) <= standoff:
                    raise NavigationError("goal already within standoff but not reachable by the arm")
                approach(state.robot, best.pose, state.occ, p.footprint_radius, sc.scene, p.standoff_factor, p.body_height)
                state.pending = [state.robot.camera]
            except NavigationError as exc:
                log.info("iteration %d: %s", state.iteration, exc)
                state.blacklist[best.pose] = state.iteration + p.blacklist_iterations
                state.cache.entries = [e for e in state.cache.entries if e.pose != best.pose]

    roi_pct, env_pct = compute_metrics(state.occ, sc.exploration_bounds, sc.roi, (state.baseline_roi, state.baseline_env))
    record = IterationRecord(
        iteration=state.iteration,
        planning_time_s=planning,
        sim_time_s=state.robot.sim_time,
        roi_unknown_fraction=1.0 - roi_pct / 100.0,
        env_unknown_fraction=1.0 - env_pct / 100.0,
        distance_m=state.robot.base_distance,
        tree_size=len(tree),
        best_gain=float(best.score) if best is not None else float("nan"),
        action=action,
        captures=state.captures,
        g_min=state.cache.g_min,
        cache_size=len(state.cache.entries),
    )
    state.iteration += 1
    return state, record


def warmup() -> None:
    """Compile the JIT kernels outside any timed section."""
    from .geometry import Scene

    b = Aabb((-1, -1, 0), (1, 1, 1))
    sc = ScenarioConfig(Scene(()), b, b, robot_start=(0.0, 0.0, 0.0))
    params = MissionParams(camera=CameraModel(width=4, height=3), planner=PlannerConfig(max_nodes=3))
    state = init_mission(sc, params)
    run_iteration(state)


def run_mission(scenario: ScenarioConfig, params: MissionParams | None = None, callback=None, return_state: bool = False):
    """Iterate until no candidate clears g_min or a cap trips.

    Returns (final map, records), plus the final MissionState when
    `return_state` is set. `callback(record)` streams records as they occur.
    """
    warmup()
    state = init_mission(scenario, params)
    records = []
    while not state.finished:
        if state.iteration >= scenario.max_iterations or state.robot.sim_time >= scenario.max_sim_time:
            break
        state, rec = run_iteration(state)
        records.append(rec)
        if callback is not None:
            callback(rec)
    if return_state:
        return state.occ, records, state
    return state.occ, records


def with_overrides(scenario: ScenarioConfig, **kw) -> ScenarioConfig:
    """Copy a scenario with top-level or flag fields replaced."""
    flag_fields = {"gain_threshold", "sampling", "cache", "utility", "arm"}
    flag_kw = {k: v for k, v in kw.items() if k in flag_fields}
    top_kw = {k: v for k, v in kw.items() if k not in flag_fields}
    if flag_kw:
        top_kw["flags"] = replace(scenario.flags, **flag_kw)
    return replace(scenario, **top_kw)
