"""Fine reference solutions of the three examples: iteration counts and residual histories."""

import argparse
import time

from kerrlod.cli import RunConfig, make_problem
from kerrlod.solver import IterationConfig, solve_fine_reference, write_field

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenarios", default="example1,example2,example3")
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--h", type=int, default=7)
    ap.add_argument("--eta", type=int, default=7)
    ap.add_argument("--max-iters", type=int, default=100)
    ap.add_argument("--dump", default=None, help="directory for field dumps")
    args = ap.parse_args()

    for name in args.scenarios.split(","):
        cfg = RunConfig(scenario=name, seed=args.seed, H_exp=1, eta_exp=args.eta, h_exp=args.h)
        prob = make_problem(cfg)
        t0 = time.perf_counter()
        u, rep = solve_fine_reference(prob, IterationConfig(max_iters=args.max_iters))
        print(f"{name}: {rep.iterations} iterations, residual {rep.residuals[-1]:.2e}, "
              f"converged={rep.converged}, {time.perf_counter() - t0:.1f}s")
        if args.dump:
            write_field(f"{args.dump}/{name}_reference.txt", prob.hierarchy.fine, u)
