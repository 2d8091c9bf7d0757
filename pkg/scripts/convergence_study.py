"""H-convergence of the adaptive LOD against FEM (and optionally the frozen/full variants).

    python scripts/convergence_study.py --scenario example1 --H 2,3,4,5 --out runs/study_ex1
"""

import argparse
import logging

from kerrlod.cli import RunConfig, fitted_order, run_convergence_study

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenario", default="example1")
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--H", default="2,3,4,5")
    ap.add_argument("--eta", type=int, default=5)
    ap.add_argument("--h", type=int, default=7)
    ap.add_argument("--methods", default="lod_adaptive,lod_frozen,fem")
    ap.add_argument("--linear", action="store_true")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/study")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = RunConfig(scenario=args.scenario, seed=args.seed, eta_exp=args.eta, h_exp=args.h, linear=args.linear,
                    workers=args.workers, output=args.out)
    H_exps = [int(s) for s in args.H.split(",")]
    rows = run_convergence_study(cfg, H_exps, args.methods.split(","))
    for method in args.methods.split(","):
        sel = [r for r in rows if r["method"] == method]
        for r in sel:
            print(f"{method:>13s}  H={r['H']:<9g} min={r['min_error']:.4e}  final={r['final_error']:.4e}  "
                  f"max update={100 * r['max_updated_fraction']:.2f}%")
        print(f"{method:>13s}  fitted order {fitted_order([r['H'] for r in sel], [r['min_error'] for r in sel]):.2f}")
