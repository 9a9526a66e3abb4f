"""Compare retention methods on a bundled plan and print average forgetting."""

import argparse
import time

import numpy as np

from glumind.harness import bundled_plan, load_plan, prepare_all, run_sequence
from glumind.retention import RetentionMethod


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--plan", default="benchmark", help="bundled plan name or path")
    p.add_argument("--methods", default="none,lwf,ewc,er")
    p.add_argument("--lambda", dest="lam", type=float, help="LwF weight; defaults to the plan's")
    args = p.parse_args()

    path = bundled_plan(args.plan)
    plan = load_plan(path if path.exists() else args.plan)
    data = prepare_all(plan)
    for kind in args.methods.split(","):
        method = RetentionMethod(kind)
        if kind == "lwf":
            lam = plan.retention.lam if args.lam is None else args.lam
            method = RetentionMethod("lwf", lam=lam)
        t0 = time.time()
        reports = [run_sequence(plan.with_(retention=method), run, data).report for run in range(plan.runs)]
        frs = [r.avg_fr for r in reports]
        cells = " ".join(f"{row.cohort}={row.fr:.4f}" for row in reports[0].rows)
        print(f"{method.label:>5}  avg FR {np.mean(frs):.4f}  [{cells}]  {time.time() - t0:.0f}s")


if __name__ == "__main__":
    main()
