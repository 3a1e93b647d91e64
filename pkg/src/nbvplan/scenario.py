"""Scenario files: YAML box worlds with bounds, ROI, intensity samples and flags.

Schema::

    name: str                       # optional
    seed: int                       # optional, default 0 (warns)
    mode: explore_inspect | explore
    ground_z: float                 # optional, default 0
    bounds: {min: [x, y, z], max: [x, y, z]}
    roi:    {min: [x, y, z], max: [x, y, z]}
    robot_start: [x, y, heading]
    boxes: [{min: [...], max: [...]}, ...]
    intensity_samples: [[x, y, z, value], ...]
    flags: {gain_threshold, sampling, cache, utility, arm}
    caps: {max_iterations: int, max_sim_time: float}
"""

from __future__ import annotations

import importlib.resources
import math
import warnings
from pathlib import Path

import yaml

from .geometry import (
    Aabb,
    ArmMode,
    CacheMode,
    Flags,
    GainThreshold,
    Mode,
    Sampling,
    ScenarioConfig,
    Scene,
    Utility,
)
from .robot import ArmWorkspace
from .sensor import footprint_collides, inside_obstacle

BUNDLED = ("disaster_small", "warehouse_small")

_FLAG_ENUMS = {
    "gain_threshold": GainThreshold,
    "sampling": Sampling,
    "cache": CacheMode,
    "utility": Utility,
    "arm": ArmMode,
}


class ScenarioError(ValueError):
    """Invalid scenario file. `code` names the failure class."""

    def __init__(self, code: str, message: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{code}] " + (", ".join(where) + ": " if where else "")
        super().__init__(prefix + message)
        self.code = code
        self.line = line
        self.field = field


def bundled_path(name: str) -> Path:
    return Path(str(importlib.resources.files("nbvplan") / "scenarios" / f"{name}.yaml"))


def resolve(path_or_name) -> Path:
    p = Path(path_or_name)
    if not p.exists() and str(path_or_name) in BUNDLED:
        return bundled_path(str(path_or_name))
    return p


def _line_index(node, prefix="", out=None):
    """Map dotted field paths to 1-based source lines."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[key] = k.start_mark.line + 1
            _line_index(v, key, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            key = f"{prefix}[{i}]"
            out[key] = v.start_mark.line + 1
            _line_index(v, key, out)
    return out


class _Reader:
    def __init__(self, data: dict, lines: dict):
        self.data = data
        self.lines = lines

    def fail(self, field: str, message: str, code: str = "invalid_field"):
        raise ScenarioError(code, message, self.lines.get(field), field)

    def vec(self, value, field: str, n: int = 3) -> tuple:
        if not isinstance(value, (list, tuple)) or len(value) != n:
            self.fail(field, f"expected a list of {n} numbers")
        try:
            out = tuple(float(v) for v in value)
        except (TypeError, ValueError):
            self.fail(field, f"expected a list of {n} numbers")
        if not all(math.isfinite(v) for v in out):
            self.fail(field, "values must be finite")
        return out

    def box(self, value, field: str) -> Aabb:
        if not isinstance(value, dict) or "min" not in value or "max" not in value:
            self.fail(field, "expected a mapping with 'min' and 'max'")
        lo = self.vec(value["min"], f"{field}.min")
        hi = self.vec(value["max"], f"{field}.max")
        try:
            return Aabb(lo, hi)
        except ValueError as exc:
            self.fail(field, str(exc))

    def enum(self, enum_cls, value, field: str):
        try:
            return enum_cls(value)
        except ValueError:
            allowed = ", ".join(e.value for e in enum_cls)
            self.fail(field, f"unknown value {value!r}; expected one of {allowed}")


def parse_scenario(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError("malformed", f"{source}: {exc}", mark.line + 1 if mark else None) from exc
    if not isinstance(data, dict):
        raise ScenarioError("malformed", f"{source}: top level must be a mapping")
    r = _Reader(data, _line_index(root))

    for required in ("bounds", "roi", "robot_start"):
        if required not in data:
            raise ScenarioError("missing_field", f"required field '{required}' is missing", None, required)

    if "seed" not in data:
        warnings.warn(f"{source}: no seed given, using 0", stacklevel=3)
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        r.fail("seed", "seed must be an integer")

    ground_z = float(data.get("ground_z", 0.0))
    boxes = tuple(r.box(b, f"boxes[{i}]") for i, b in enumerate(data.get("boxes") or []))
    for i, b in enumerate(boxes):
        if any(s <= 0 for s in b.size):
            r.fail(f"boxes[{i}]", "obstacle box must have positive volume")
        if b.min.z < ground_z:
            r.fail(f"boxes[{i}]", "obstacle box extends below ground")
    scene = Scene(boxes, ground_z)
    bounds = r.box(data["bounds"], "bounds")
    roi = r.box(data["roi"], "roi")
    if not bounds.contains_box(roi):
        raise ScenarioError("roi_outside_bounds", "ROI is not contained in the exploration bounds", r.lines.get("roi"), "roi")

    start = r.vec(data["robot_start"], "robot_start")
    if not (bounds.min.x <= start[0] <= bounds.max.x and bounds.min.y <= start[1] <= bounds.max.y):
        raise ScenarioError("start_outside_bounds", "robot start lies outside the exploration bounds", r.lines.get("robot_start"), "robot_start")
    ws = ArmWorkspace()
    if footprint_collides(scene, start[:2], 0.45, 1.4):
        raise ScenarioError("start_in_collision", "robot start footprint intersects an obstacle", r.lines.get("robot_start"), "robot_start")
    cam_z = ground_z + ws.arm_base_offset.z + ws.stow_offset.z
    c, s = math.cos(start[2]), math.sin(start[2])
    cam = (start[0] + c * ws.stow_offset.x, start[1] + s * ws.stow_offset.x, cam_z)
    if inside_obstacle(scene, cam):
        raise ScenarioError("start_in_collision", "stowed camera at start is inside an obstacle", r.lines.get("robot_start"), "robot_start")

    samples = []
    for i, rec in enumerate(data.get("intensity_samples") or []):
        x, y, z, v = r.vec(rec, f"intensity_samples[{i}]", 4)
        if v < 0:
            r.fail(f"intensity_samples[{i}]", "intensity values must be non-negative")
        samples.append(((x, y, z), v))

    mode = r.enum(Mode, data.get("mode", "explore_inspect"), "mode")
    flag_data = data.get("flags") or {}
    if not isinstance(flag_data, dict):
        r.fail("flags", "flags must be a mapping")
    unknown = set(flag_data) - set(_FLAG_ENUMS)
    if unknown:
        r.fail("flags", f"unknown flag(s): {', '.join(sorted(unknown))}")
    flags = Flags(**{k: r.enum(_FLAG_ENUMS[k], v, f"flags.{k}") for k, v in flag_data.items()})

    caps = data.get("caps") or {}
    try:
        max_iter = int(caps.get("max_iterations", 300))
        max_time = float(caps.get("max_sim_time", 3600.0))
    except (TypeError, ValueError):
        r.fail("caps", "caps must be numbers")

    return ScenarioConfig(
        scene=scene,
        exploration_bounds=bounds,
        roi=roi,
        intensity_samples=tuple(samples),
        robot_start=start,
        rng_seed=seed,
        mode=mode,
        flags=flags,
        name=str(data.get("name", Path(source).stem)),
        max_iterations=max_iter,
        max_sim_time=max_time,
    )


def load_scenario(path) -> ScenarioConfig:
    """Parse and validate a scenario file (or a bundled fixture name)."""
    p = resolve(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError("unreadable", f"cannot read {p}: {exc}") from exc
    return parse_scenario(text, str(p))
