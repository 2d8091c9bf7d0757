"""Error vs iteration for several fixed tolerances at H = 2^-3 (Example 3 setup by default).

Tolerances are multiples of half the largest indicator in the second step of
the always-update run, so tol = 2 freezes the correctors.

    python scripts/tolerance_sweep.py --out runs/sweep_ex3
"""

import argparse
import logging
from collections import defaultdict

from kerrlod.cli import RunConfig, run_tolerance_sweep

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenario", default="example3")
    ap.add_argument("--H", type=int, default=3)
    ap.add_argument("--tols", default="0,0.0625,0.125,0.25,0.5,1,2")
    ap.add_argument("--iters", type=int, default=8)
    ap.add_argument("--unit", type=float, default=None)
    ap.add_argument("--out", default="runs/sweep")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = RunConfig(scenario=args.scenario, H_exp=args.H, max_iters=args.iters, output=args.out)
    rows = run_tolerance_sweep(cfg, [float(t) for t in args.tols.split(",")], args.unit)
    curves = defaultdict(list)
    for r in rows:
        curves[r["tol"]].append(r["rel_error"])
    for t, errs in curves.items():
        print(f"tol={t:<7g} " + " ".join(f"{e:.3e}" for e in errs))
