"""Command-line driver: single runs, ablation matrices, scenario linting, map export.

Subcommands::

    nbvplan run SCENARIO [--seed N] [--mode M] [--gain-threshold ...] [-o run.csv]
    nbvplan matrix MANIFEST.yaml [--jobs N]
    nbvplan validate SCENARIO [SCENARIO ...]
    nbvplan export SCENARIO --points map.xyz [--voxels map.txt]

SCENARIO is a YAML path or a bundled fixture name (disaster_small,
warehouse_small). Any ScenarioConfig field can be overridden from the
command line.

Manifest schema (YAML)::

    scenario: disaster_small        # path or fixture name
    seeds: [0, 1, 2]
    output: out/                    # created if missing
    overrides: {max_sim_time: 1200} # applied to every cell
    cells:                          # one entry per flag combination
      - {name: full}
      - {name: fixed-aeps, gain_threshold: fixed, sampling: aeps}
    matrix: {cache: [filtered, unfiltered]}   # alternative to cells: full product
    export: {voxels: false, points: false}

Outputs: ``runs/<run_id>.csv`` (one row per iteration), ``summary.csv``
(mean and std of the final values per cell) and ``run.log``. Only the log
carries timestamps. Every metrics column except planning_time_s is a pure
function of the manifest; planning_time_s is measured wall-clock time.

Voxel export lines are ``i j k state log_odds``; point exports are
``x y z state`` at voxel centres. Both list known voxels only.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .geometry import ArmMode, CacheMode, GainThreshold, Mode, Sampling, ScenarioConfig, Utility
from .mission import IterationRecord, run_mission, with_overrides
from .scenario import ScenarioError, load_scenario

log = logging.getLogger(__name__)

METRICS_COLUMNS = (
    "run_id", "seed", "mode", "gain_threshold", "sampling", "cache", "utility", "arm",
    "iteration", "planning_time_s", "sim_time_s", "roi_pct", "env_pct", "distance_m",
    "tree_size", "best_gain", "action",
)
SUMMARY_FIELDS = ("roi_pct", "env_pct", "distance_m", "sim_time_s", "planning_time_s", "iterations")
SUMMARY_COLUMNS = (
    "cell", "mode", "gain_threshold", "sampling", "cache", "utility", "arm", "runs", "failed",
    *(f"{f}_{s}" for f in SUMMARY_FIELDS for s in ("mean", "std")),
)

_ENUMS = {
    "mode": Mode,
    "gain_threshold": GainThreshold,
    "sampling": Sampling,
    "cache": CacheMode,
    "utility": Utility,
    "arm": ArmMode,
}
_NUMERIC = {"max_iterations": int, "max_sim_time": float, "rng_seed": int}


class ManifestError(ValueError):
    pass


def parse_overrides(raw: dict) -> dict:
    """Turn plain YAML/CLI values into typed ScenarioConfig overrides."""
    out = {}
    for k, v in raw.items():
        if k == "seed":
            k = "rng_seed"
        if k in _ENUMS:
            try:
                out[k] = _ENUMS[k](v)
            except ValueError:
                choices = ", ".join(e.value for e in _ENUMS[k])
                raise ManifestError(f"{k}: '{v}' is not one of {choices}") from None
        elif k in _NUMERIC:
            try:
                out[k] = _NUMERIC[k](v)
            except (TypeError, ValueError):
                raise ManifestError(f"{k}: expected a number, got {v!r}") from None
        else:
            raise ManifestError(f"unknown override '{k}'")
    return out


@dataclass
class RunManifest:
    scenario: str
    seeds: list
    output: Path
    cells: list = field(default_factory=lambda: [{"name": "default"}])
    overrides: dict = field(default_factory=dict)
    export_voxels: bool = False
    export_points: bool = False

    def __post_init__(self):
        if not self.seeds:
            raise ManifestError("manifest needs at least one seed")
        self.output = Path(self.output)
        names = [c["name"] for c in self.cells]
        if len(set(names)) != len(names):
            raise ManifestError("cell names must be unique")

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "RunManifest":
        if "scenario" not in data or "seeds" not in data:
            raise ManifestError("manifest needs 'scenario' and 'seeds'")
        if "cells" in data and "matrix" in data:
            raise ManifestError("give either 'cells' or 'matrix', not both")
        if "matrix" in data:
            axes = data["matrix"]
            keys = list(axes)
            cells = []
            for combo in itertools.product(*(axes[k] for k in keys)):
                cell = dict(zip(keys, combo))
                cell["name"] = "-".join(str(v) for v in combo)
                cells.append(cell)
        else:
            cells = [dict(c) for c in data.get("cells") or [{"name": "default"}]]
        for i, c in enumerate(cells):
            c.setdefault("name", f"cell{i}")
            parse_overrides({k: v for k, v in c.items() if k != "name"})
        parse_overrides(data.get("overrides") or {})
        scenario = str(data["scenario"])
        if base_dir is not None and (base_dir / scenario).exists():
            scenario = str(base_dir / scenario)
        exports = data.get("export") or {}
        return cls(
            scenario=scenario,
            seeds=[int(s) for s in data["seeds"]],
            output=Path(data.get("output", "out")),
            cells=cells,
            overrides=dict(data.get("overrides") or {}),
            export_voxels=bool(exports.get("voxels", False)),
            export_points=bool(exports.get("points", False)),
        )

    @classmethod
    def load(cls, path) -> "RunManifest":
        p = Path(path)
        return cls.from_dict(yaml.safe_load(p.read_text()) or {}, p.parent)

    def jobs(self):
        """(run_id, cell name, typed overrides) per seed and cell, in a fixed order."""
        for cell in self.cells:
            for seed in self.seeds:
                kw = parse_overrides(self.overrides)
                kw.update(parse_overrides({k: v for k, v in cell.items() if k != "name"}))
                kw["rng_seed"] = seed
                yield f"{cell['name']}_s{seed}", cell["name"], kw


def metrics_rows(run_id: str, scenario: ScenarioConfig, records: list[IterationRecord]):
    f = scenario.flags
    head = [run_id, scenario.rng_seed, scenario.mode.value, f.gain_threshold.value, f.sampling.value,
            f.cache.value, f.utility.value, f.arm.value]
    for r in records:
        yield head + [
            r.iteration, f"{r.planning_time_s:.6f}", f"{r.sim_time_s:.3f}", f"{r.roi_pct:.4f}",
            f"{r.env_pct:.4f}", f"{r.distance_m:.4f}", r.tree_size, f"{r.best_gain:.6g}", r.action.value,
        ]


def write_metrics(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        w.writerows(rows)


def run_single(scenario: ScenarioConfig, run_id: str, out_csv: Path | None = None, voxels: Path | None = None, points: Path | None = None):
    occ, records = run_mission(scenario)
    if out_csv is not None:
        write_metrics(out_csv, metrics_rows(run_id, scenario, records))
    if voxels is not None:
        with open(voxels, "w") as fh:
            occ.export_voxels(fh)
    if points is not None:
        with open(points, "w") as fh:
            occ.export_points(fh)
    return occ, records


def _matrix_worker(args):
    manifest, run_id, kw = args
    out = manifest.output
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            scenario = with_overrides(load_scenario(manifest.scenario), **kw)
        run_single(
            scenario, run_id, out / "runs" / f"{run_id}.csv",
            out / "maps" / f"{run_id}.voxels" if manifest.export_voxels else None,
            out / "maps" / f"{run_id}.xyz" if manifest.export_points else None,
        )
        return run_id, None
    except Exception as exc:  # a failed run is recorded and the matrix continues
        return run_id, f"{type(exc).__name__}: {exc}"


def _final_values(path: Path) -> dict | None:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return None
    last = rows[-1]
    out = {k: float(last[k]) for k in ("roi_pct", "env_pct", "distance_m", "sim_time_s")}
    out["planning_time_s"] = float(np.mean([float(r["planning_time_s"]) for r in rows]))
    out["iterations"] = float(len(rows))
    return out


def summarize(manifest: RunManifest, failed: set) -> list[list]:
    """Mean and population std of the final per-run values, one row per cell."""
    rows = []
    base = parse_overrides(manifest.overrides)
    for cell in manifest.cells:
        kw = dict(base)
        kw.update(parse_overrides({k: v for k, v in cell.items() if k != "name"}))
        finals, n_failed = [], 0
        for seed in manifest.seeds:
            run_id = f"{cell['name']}_s{seed}"
            path = manifest.output / "runs" / f"{run_id}.csv"
            vals = None if run_id in failed or not path.exists() else _final_values(path)
            if vals is None:
                n_failed += 1
            else:
                finals.append(vals)
        labels = [kw.get(k, None) for k in ("mode", "gain_threshold", "sampling", "cache", "utility", "arm")]
        defaults = [Mode.EXPLORE_INSPECT, GainThreshold.VARIABLE, Sampling.WGS, CacheMode.FILTERED, Utility.WEIGHTED, ArmMode.MOBILE]
        if "mode" not in kw:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                defaults[0] = load_scenario(manifest.scenario).mode
        row = [cell["name"], *((l or d).value for l, d in zip(labels, defaults)), len(finals), n_failed]
        for f in SUMMARY_FIELDS:
            if finals:
                v = np.array([x[f] for x in finals])
                row += [f"{v.mean():.4f}", f"{v.std():.4f}"]
            else:
                row += ["nan", "nan"]
        rows.append(row)
    return rows


def run_matrix(manifest: RunManifest, jobs: int = 1) -> int:
    """Execute every (cell, seed) run and write per-run CSVs plus summary.csv.

    Returns 0 when every run succeeded, 1 otherwise.
    """
    out = manifest.output
    (out / "runs").mkdir(parents=True, exist_ok=True)
    if manifest.export_voxels or manifest.export_points:
        (out / "maps").mkdir(exist_ok=True)
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    try:
        tasks = [(manifest, run_id, kw) for run_id, _, kw in manifest.jobs()]
        log.info("matrix: %d runs, scenario %s", len(tasks), manifest.scenario)
        failed = set()
        t0 = time.time()
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_matrix_worker, tasks))
        else:
            results = [_matrix_worker(t) for t in tasks]
        for run_id, err in results:
            if err is None:
                log.info("run %s done", run_id)
            else:
                failed.add(run_id)
                log.error("run %s failed: %s", run_id, err)
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_COLUMNS)
            w.writerows(summarize(manifest, failed))
        log.info("matrix finished in %.1f s, %d failed", time.time() - t0, len(failed))
    finally:
        log.removeHandler(handler)
        handler.close()
    return 1 if failed else 0


def _add_override_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--gain-threshold", choices=[m.value for m in GainThreshold])
    p.add_argument("--sampling", choices=[m.value for m in Sampling])
    p.add_argument("--cache", choices=[m.value for m in CacheMode])
    p.add_argument("--utility", choices=[m.value for m in Utility])
    p.add_argument("--arm", choices=[m.value for m in ArmMode])
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--max-sim-time", type=float)


def _scenario_from_args(args) -> ScenarioConfig:
    keys = ("seed", "mode", "gain_threshold", "sampling", "cache", "utility", "arm", "max_iterations", "max_sim_time")
    raw = {k: getattr(args, k) for k in keys if getattr(args, k) is not None}
    return with_overrides(load_scenario(args.scenario), **parse_overrides(raw))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nbvplan", description="Next-best-view exploration and inspection planner")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario and write its metrics")
    p.add_argument("scenario")
    _add_override_args(p)
    p.add_argument("-o", "--out", type=Path, help="metrics CSV (default: print a one-line summary only)")
    p.add_argument("--voxels", type=Path)
    p.add_argument("--points", type=Path)

    p = sub.add_parser("matrix", help="run a seeded ablation sweep from a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", type=Path, help="override the manifest's output directory")

    p = sub.add_parser("validate", help="check scenario files and report diagnostics")
    p.add_argument("scenarios", nargs="+")

    p = sub.add_parser("export", help="run a scenario and export the final map")
    p.add_argument("scenario")
    _add_override_args(p)
    p.add_argument("--points", type=Path)
    p.add_argument("--voxels", type=Path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "validate":
            status = 0
            for s in args.scenarios:
                try:
                    sc = load_scenario(s)
                    print(f"{s}: ok ({len(sc.scene.boxes)} boxes, {len(sc.intensity_samples)} intensity samples)")
                except ScenarioError as exc:
                    print(f"{s}: {exc}")
                    status = 1
            return status
        if args.command == "matrix":
            manifest = RunManifest.load(args.manifest)
            if args.output is not None:
                manifest.output = args.output
            status = run_matrix(manifest, args.jobs)
            print(f"wrote {manifest.output / 'summary.csv'}")
            return status
        scenario = _scenario_from_args(args)
        if args.command == "export" and args.points is None and args.voxels is None:
            print("export: give --points and/or --voxels", file=sys.stderr)
            return 2
        out = getattr(args, "out", None)
        run_id = f"{scenario.name}_s{scenario.rng_seed}"
        _, records = run_single(scenario, run_id, out, args.voxels, args.points)
        last = records[-1] if records else None
        if last is not None:
            print(f"{run_id}: {len(records)} iterations, ROI {last.roi_pct:.1f}%, environment {last.env_pct:.1f}%, "
                  f"distance {last.distance_m:.1f} m, sim time {last.sim_time_s:.0f} s")
        return 0
    except (ScenarioError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
