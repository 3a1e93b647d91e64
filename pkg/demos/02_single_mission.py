"""One explore-inspect mission on the bundled disaster_small scene.

The planner grows a tree of camera poses around the arm base each iteration,
prefers poses the arm can reach, and drives the base only when it must.
"""

import sys

from nbvplan import load_scenario, run_mission
from nbvplan.mission import with_overrides

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
scenario = with_overrides(load_scenario("disaster_small"), rng_seed=seed, max_sim_time=600.0)
print(f"{scenario.name}: bounds {scenario.exploration_bounds.size}, ROI {scenario.roi.size}, seed {seed}")

def show(rec):
    if rec.iteration % 10 == 0:
        print(
            f"iter {rec.iteration:3d}  sim {rec.sim_time_s:6.0f} s  ROI {rec.roi_pct:5.1f}%  "
            f"env {rec.env_pct:5.1f}%  base {rec.distance_m:5.1f} m  {rec.action.value}"
        )

occ, records, state = run_mission(scenario, callback=show, return_state=True)
last = records[-1]
print(f"\nstopped after {len(records)} iterations ({'terminated' if state.finished else 'cap reached'})")
print(f"ROI explored {last.roi_pct:.1f}%, environment {last.env_pct:.1f}%, base travel {last.distance_m:.1f} m")
print(f"mean planning time {sum(r.planning_time_s for r in records) / len(records):.3f} s")
