"""Mobile-manipulator surrogate: arm workspace envelope, base navigation, view execution.

Joint-space inverse kinematics is replaced by a workspace envelope around the
arm base anchor. The decision structure is unchanged: use the arm while the
envelope covers the next views, drive the base otherwise.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import ArmMode, Point3, ViewPose, normalize_yaw
from .occupancy import OccupancyMap, VoxelState
from .sensor import footprint_collides, render_depth

log = logging.getLogger(__name__)


class NavigationError(RuntimeError):
    """No drivable path to the requested goal."""


@dataclass(frozen=True)
class BasePose:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_yaw(float(self.heading)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class ArmWorkspace:
    arm_base_offset: Point3 = Point3(0.0, 0.0, 0.5)
    max_reach: float = 1.3
    inner_radius: float = 0.35
    z_min: float = 0.4
    z_max: float = 1.4
    pitch_limits: tuple[float, float] = (-0.6, 0.6)
    # stowed camera, relative to the arm base in the base frame
    stow_offset: Point3 = Point3(0.0, 0.0, 0.4)

    def __post_init__(self):
        if not self.inner_radius < self.max_reach:
            raise ValueError("inner_radius must be below max_reach")
        if not self.z_min < self.z_max:
            raise ValueError("z_min must be below z_max")


@dataclass(frozen=True)
class MotionCostModel:
    base_speed: float = 0.5
    arm_eef_speed: float = 0.2
    base_turn_rate: float = 0.5
    capture_time: float = 1.0

    def __post_init__(self):
        if min(self.base_speed, self.arm_eef_speed, self.base_turn_rate) <= 0:
            raise ValueError("speeds must be positive")
        if self.capture_time < 0:
            raise ValueError("capture_time must be non-negative")


@dataclass
class RobotState:
    base: BasePose
    workspace: ArmWorkspace = field(default_factory=ArmWorkspace)
    camera: ViewPose | None = None
    arm_mode: ArmMode = ArmMode.MOBILE
    costs: MotionCostModel = field(default_factory=MotionCostModel)
    ground_z: float = 0.0
    base_distance: float = 0.0
    arm_travel: float = 0.0
    sim_time: float = 0.0
    # ground cells where a drive was stopped by contact with the scene
    contacts: set = field(default_factory=set)

    def __post_init__(self):
        if self.camera is None:
            self.camera = self.stow_pose()

    def arm_base(self) -> Point3:
        o = self.workspace.arm_base_offset
        c, s = math.cos(self.base.heading), math.sin(self.base.heading)
        return Point3(self.base.x + c * o.x - s * o.y, self.base.y + s * o.x + c * o.y, self.ground_z + o.z)

    def stow_pose(self, pitch: float = 0.0) -> ViewPose:
        a = self.arm_base()
        o = self.workspace.stow_offset
        c, s = math.cos(self.base.heading), math.sin(self.base.heading)
        p = (a.x + c * o.x - s * o.y, a.y + s * o.x + c * o.y, a.z + o.z)
        return ViewPose(p, self.base.heading, pitch)


def is_arm_reachable(state: RobotState, target: ViewPose, occ: OccupancyMap, r_b: float, from_position=None, clearance: float = 0.0) -> bool:
    """Envelope, height band, pitch, clearance at the target, clear straight motion."""
    if state.arm_mode is ArmMode.STATIONARY:
        stow = state.stow_pose()
        return target.position.distance(stow.position) < 1e-9 and abs(normalize_yaw(target.yaw - stow.yaw)) < 1e-9
    ws = state.workspace
    dist = target.position.distance(state.arm_base())
    if not ws.inner_radius <= dist <= ws.max_reach:
        return False
    h = target.position.z - state.ground_z
    if not ws.z_min <= h <= ws.z_max:
        return False
    if not ws.pitch_limits[0] <= target.pitch <= ws.pitch_limits[1]:
        return False
    zone = (state.camera.position, clearance) if clearance > 0 else None
    if not occ.is_sphere_free(target.position, r_b, zone):
        return False
    start = state.camera.position if from_position is None else from_position
    return occ.is_segment_free(start, target.position, r_b, zone)


def reachable_prefix(branch, state: RobotState, occ: OccupancyMap, visited, r_b: float, clearance: float = 0.0) -> list[ViewPose]:
    """Longest leading run of branch poses the arm can visit that are not yet visited."""
    out = []
    prev = state.camera.position
    for pose in branch:
        if visited.penalties(np.asarray(pose.position)[None, :], np.array([pose.yaw]))[0] < 0:
            break
        if not is_arm_reachable(state, pose, occ, r_b, from_position=prev, clearance=clearance):
            break
        out.append(pose)
        prev = pose.position
    return out


def blocked_columns(occ: OccupancyMap, ground_z: float, height: float, footprint_radius: float) -> np.ndarray:
    """2D mask of grid columns the base footprint cannot occupy."""
    lay = occ.layout
    zc = lay.centers(2)
    band = (zc >= ground_z) & (zc <= ground_z + height)
    occupied = occ.states()[:, :, band] == VoxelState.OCCUPIED
    cols = occupied.any(axis=2)
    # distance from a cell centre to the nearest point of a neighbouring
    # cell's square, so every free cell keeps the full footprint clearance
    r = int(math.ceil(footprint_radius / lay.resolution + 0.5))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    gap_x = np.maximum(np.abs(xx) - 0.5, 0.0) * lay.resolution
    gap_y = np.maximum(np.abs(yy) - 0.5, 0.0) * lay.resolution
    disc = gap_x**2 + gap_y**2 < footprint_radius**2
    return ndimage.binary_dilation(cols, structure=disc)


_MOVES = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def astar_cells(blocked: np.ndarray, start, goal_xy_cells, standoff_cells: float):
    """8-connected A* on a boolean grid; goal is any cell within standoff of the goal point.

    Returns (cell path, cost in cells) or None.
    """
    nx, ny = blocked.shape
    gx, gy = goal_xy_cells
    sq2 = math.sqrt(2.0)

    def h(i, j):
        dx, dy = abs(i + 0.5 - gx), abs(j + 0.5 - gy)
        octile = max(dx, dy) + (sq2 - 1.0) * min(dx, dy)
        return max(0.0, octile - standoff_cells) if standoff_cells > 0 else octile

    def is_goal(i, j):
        if standoff_cells > 0:
            return math.hypot(i + 0.5 - gx, j + 0.5 - gy) <= standoff_cells
        return i == int(math.floor(gx)) and j == int(math.floor(gy))

    si, sj = start
    g = {start: 0.0}
    parent = {start: None}
    heap = [(h(si, sj), 0.0, si, sj)]
    closed = set()
    while heap:
        _, cost, i, j = heapq.heappop(heap)
        if (i, j) in closed:
            continue
        closed.add((i, j))
        if is_goal(i, j):
            path = [(i, j)]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            path.reverse()
            return path, cost
        for di, dj in _MOVES:
            ni, nj = i + di, j + dj
            if not (0 <= ni < nx and 0 <= nj < ny) or blocked[ni, nj] or (ni, nj) in closed:
                continue
            nc = cost + (sq2 if di and dj else 1.0)
            if nc < g.get((ni, nj), math.inf):
                g[(ni, nj)] = nc
                parent[(ni, nj)] = (i, j)
                heapq.heappush(heap, (nc + h(ni, nj), nc, ni, nj))
    return None


def plan_base_path(occ: OccupancyMap, start: BasePose, goal_xy, footprint_radius: float, height: float = 1.4, ground_z: float = 0.0, standoff: float = 0.0, extra_blocked=()) -> list[tuple[float, float]]:
    """Grid shortest path over the map's ground projection.

    Unknown columns are drivable. With a standoff the path ends at the first
    cell within that distance of the goal. Raises NavigationError.
    """
    if footprint_radius <= 0:
        raise ValueError("footprint_radius must be positive")
    lay = occ.layout
    res = lay.resolution
    blocked = blocked_columns(occ, ground_z, height, footprint_radius)
    ox, oy = lay.origin.x, lay.origin.y
    si = int(math.floor((start.x - ox) / res))
    sj = int(math.floor((start.y - oy) / res))
    if not (0 <= si < blocked.shape[0] and 0 <= sj < blocked.shape[1]):
        raise NavigationError("start outside the map")
    blocked = blocked.copy()
    for i, j in extra_blocked:
        if 0 <= i < blocked.shape[0] and 0 <= j < blocked.shape[1]:
            blocked[i, j] = True
    blocked[si, sj] = False
    goal_cells = ((goal_xy[0] - ox) / res, (goal_xy[1] - oy) / res)
    found = astar_cells(blocked, (si, sj), goal_cells, standoff / res)
    if found is None:
        raise NavigationError(f"no path to {tuple(goal_xy)}")
    cells, _ = found
    pts = [(start.x, start.y)] + [(ox + (i + 0.5) * res, oy + (j + 0.5) * res) for i, j in cells[1:]]
    if standoff == 0.0 and len(cells) > 1:
        pts[-1] = (float(goal_xy[0]), float(goal_xy[1]))
    return pts


def path_length(points) -> float:
    p = np.asarray(points, dtype=float)
    if len(p) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1)))


def approach(state: RobotState, q_best: ViewPose, occ: OccupancyMap, footprint_radius: float, scene=None, standoff_factor: float = 0.7, body_height: float = 1.4) -> RobotState:
    """Drive toward the ground projection of q_best and aim the camera at it.

    The base stops `standoff_factor * max_reach` short of the projection. A
    stationary arm cannot reach anything, so its base drives onto the
    projection itself (falling back to the usual standoff when that column is
    blocked) and turns to the goal's yaw. If the true scene blocks the path (an obstacle not yet in the
    map), the base halts at the last collision-free waypoint. Mutates and
    returns `state`.
    """
    goal = (q_best.position.x, q_best.position.y)
    stationary = state.arm_mode is ArmMode.STATIONARY
    plan = lambda standoff: plan_base_path(
        occ, state.base, goal, footprint_radius, body_height, state.ground_z, standoff, state.contacts
    )
    standoff = standoff_factor * state.workspace.max_reach
    if not stationary:
        path = plan(standoff)
    else:
        try:
            path = plan(0.0)
        except NavigationError:
            path = plan(standoff)
    driven = [path[0]]
    for p in path[1:]:
        if scene is not None and footprint_collides(scene, p, footprint_radius, body_height):
            state.contacts.add(occ.layout.key_of((p[0], p[1], state.ground_z))[:2])
            break
        driven.append(p)
    if len(driven) == 1 and len(path) > 1:
        raise NavigationError("drive blocked by an unmapped obstacle")
    heading = state.base.heading
    turned = 0.0
    for a, b in zip(driven[:-1], driven[1:]):
        seg_heading = math.atan2(b[1] - a[1], b[0] - a[0])
        turned += abs(normalize_yaw(seg_heading - heading))
        heading = seg_heading
    end = driven[-1]
    if stationary:
        face = q_best.yaw
    elif math.dist(end, goal) > 1e-9:
        face = math.atan2(goal[1] - end[1], goal[0] - end[0])
    else:
        face = heading
    turned += abs(normalize_yaw(face - heading))
    dist = path_length(driven)
    if stationary and dist == 0.0 and turned < 1e-9:
        # the fixed camera would only repeat its last view
        raise NavigationError("base already at the closest pose it can reach")
    state.base = BasePose(end[0], end[1], face)
    state.base_distance += dist
    state.sim_time += dist / state.costs.base_speed + turned / state.costs.base_turn_rate
    pitch = 0.0
    if state.arm_mode is ArmMode.MOBILE:
        cam = state.stow_pose()
        dz = q_best.position.z - cam.position.z
        horiz = math.dist(cam.position[:2], goal)
        lim = state.workspace.pitch_limits
        pitch = min(max(math.atan2(dz, horiz), lim[0]), lim[1])
    state.camera = state.stow_pose(pitch)
    return state


def execute_views(state: RobotState, poses, scene, model, occ: OccupancyMap, visited, r_b: float, clearance: float = 0.0):
    """Move the camera through `poses`, capturing and integrating at each.

    Returns (state, occ, captures). Poses whose straight approach is no
    longer collision-free in the current map are skipped.
    """
    captures = 0
    for pose in poses:
        disp = pose.position.distance(state.camera.position)
        zone = (state.camera.position, clearance) if clearance > 0 else None
        if disp > 0 and not occ.is_segment_free(state.camera.position, pose.position, r_b, zone):
            log.info("skipping pose %s: path blocked in updated map", pose)
            continue
        state.arm_travel += disp
        state.sim_time += disp / state.costs.arm_eef_speed + state.costs.capture_time
        state.camera = pose
        depth = render_depth(scene, pose, model)
        occ.integrate_depth(pose, model, depth)
        visited.add(pose)
        captures += 1
    return state, occ, captures
