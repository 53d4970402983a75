"""FCFS with an unlimited buffer against LGFS as the load grows.

Writes plot-ready CSV files through the experiment driver, then prints
the node-3 curve.
"""

import csv
import sys
from pathlib import Path

from multihop_aoi import experiments as ex

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out") / "fig7_small"
cfg = ex.fig7_config(horizon=500.0, replications=2, grid=(0.1, 0.3, 0.6, 1.0, 2.0, 4.0))
files = ex.write_results(ex.run_experiment(cfg), out)
print("wrote", *files, sep="\n  ")

rows = list(csv.DictReader(open(out / "summary.csv")))
for p in ("NonPrmpLGFS(B=1)", "NonPrmpLCFS(B=inf)", "FCFS(B=inf)"):
    curve = [(float(r["sweep_value"]), float(r["mean"])) for r in rows if r["policy"] == p]
    print(f"{p:20s}", "  ".join(f"{lam:.1f}:{m:8.2f}" for lam, m in curve))
