"""A small ablation sweep through the CLI's matrix runner.

Two cache modes times two seeds on disaster_small, written to ./sweep_out as
per-run CSVs plus a summary table. Filtered caching should plan faster.
"""

import csv
import pathlib
import tempfile

import yaml

from nbvplan.cli import main

out = pathlib.Path("sweep_out")
manifest = {
    "scenario": "disaster_small",
    "seeds": [0, 1],
    "output": str(out),
    "overrides": {"max_sim_time": 300},
    "matrix": {"cache": ["filtered", "unfiltered"]},
}
with tempfile.NamedTemporaryFile("w", suffix=".yaml", delete=False) as fh:
    yaml.safe_dump(manifest, fh)
status = main(["matrix", fh.name])
print("matrix exit status", status)

# %% read back the summary
with open(out / "summary.csv") as fh:
    for row in csv.DictReader(fh):
        print(
            f"{row['cell']:>12}: ROI {float(row['roi_pct_mean']):5.1f}%  "
            f"planning {float(row['planning_time_s_mean']):.3f} s per iteration"
        )
