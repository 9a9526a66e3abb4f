"""Run every ablation grid on a plan and write one CSV/JSON pair per grid."""

import argparse
from pathlib import Path

from glumind.harness import AblationKind, bundled_plan, emit_ablation, load_plan, run_ablation


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--plan", default="demo")
    p.add_argument("--kinds", default=",".join(k.value for k in AblationKind))
    p.add_argument("--out", default="ablations")
    args = p.parse_args()

    path = bundled_plan(args.plan)
    plan = load_plan(path if path.exists() else args.plan)
    out = Path(args.out)
    for kind in args.kinds.split(","):
        rows = run_ablation(kind, plan)
        emit_ablation(rows, out, kind, plan)
        print(f"{kind}: {len(rows)} rows -> {out / f'ablation_{kind}.csv'}")


if __name__ == "__main__":
    main()
