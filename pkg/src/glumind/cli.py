"""Command-line entry point.

Exit codes: 0 ok, 2 usage, 3 IO, 4 training abort, 5 incompatible checkpoint/data.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from glumind.errors import CompatibilityError, ConfigurationError, GluMindError, ParseError, TrainingAbort
from glumind.harness.ablation import AblationKind, run_ablation
from glumind.harness.emit import OutputError, emit_ablation, emit_metrics
from glumind.harness.plan import ExperimentPlan, bundled_plan, load_plan
from glumind.harness.sequence import cohort_seed, prepare_all, run_sequence
from glumind.harness.training import evaluate
from glumind.model import load_model, sidecar_path
from glumind.retention import RetentionKind, RetentionMethod
from glumind.signals.generator import generate_cohort
from glumind.signals.io import load_csv, manifest_entry, write_csv, write_manifest
from glumind.signals.types import GLUCOSE_PERIOD_MIN, Cohort
from glumind.signals.windows import prepare_subject

log = logging.getLogger("glumind")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_ABORT, EXIT_INCOMPATIBLE = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _cohorts(text: str) -> list[str]:
    try:
        return [Cohort(c.strip()).value for c in text.split(",") if c.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown cohort in {text!r}; choose from {[c.value for c in Cohort]}") from None


def _read_plan(spec: str | None) -> ExperimentPlan:
    """A plan file path, or the name of a bundled plan ("demo", "benchmark")."""
    if spec is None:
        return ExperimentPlan()
    path = Path(spec)
    if not path.exists() and bundled_plan(spec).exists():
        path = bundled_plan(spec)
    if not path.exists():
        raise UsageError(f"plan file not found: {spec}")
    return load_plan(path)


def _overlay(plan: ExperimentPlan, args, names) -> ExperimentPlan:
    changes = {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}
    return plan.with_(**changes) if changes else plan


# ---------------------------------------------------------------- commands


def cmd_gen_data(args) -> int:
    plan = _read_plan(args.plan) if args.plan else ExperimentPlan()
    cohorts = args.cohorts or plan.cohort_order
    subjects = args.subjects or plan.subjects_per_cohort
    days = args.days or plan.days
    seed = plan.seed if args.seed is None else args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for cohort in cohorts:
        spec = plan.cohort_spec(cohort)
        for rec in generate_cohort(cohort, subjects, days, cohort_seed(seed, cohort), spec):
            name = f"{rec.subject_id}.csv"
            write_csv(rec, out / name)
            entries.append(manifest_entry(rec, spec, name))
    write_manifest(out / "manifest.json", entries, seed, days)
    print(f"wrote {len(entries)} subjects to {out}")
    return EXIT_OK


def _retention_from_args(plan: ExperimentPlan, args) -> ExperimentPlan:
    if args.retention is None and args.lam is None:
        return plan
    d = plan.retention.to_dict()
    if args.retention is not None:
        d["kind"] = args.retention
    if args.lam is not None:
        d["lam"] = args.lam
    return plan.with_(retention=RetentionMethod.from_dict(d))


def cmd_run_sequence(args) -> int:
    plan = _overlay(_read_plan(args.plan), args, ("epochs", "runs", "seed", "data_dir"))
    plan = _retention_from_args(plan, args)
    out = Path(args.out)
    data = prepare_all(plan)
    rows, reports = [], []
    for run in range(plan.runs):
        res = run_sequence(plan, run, data, checkpoint_dir=out / "checkpoints")
        rows.extend(res.rows)
        reports.append(res.report)
        avg = res.report.averages()["cohort_mean"]
        print(f"run {run} {plan.retention.label}: avg FR {avg['fr']:.4f} AF {avg['af']:.4f} BWT {avg['bwt']:.2f}%")
    emit_metrics(rows, reports, out, plan)
    return EXIT_OK


def cmd_ablate(args) -> int:
    plan = _overlay(_read_plan(args.plan), args, ("epochs", "runs", "seed"))
    rows = run_ablation(args.kind, plan)
    emit_ablation(rows, args.out, AblationKind(args.kind).value, plan)
    for r in rows:
        print(f"{r.config:>16} {r.cohort:>8} RMSE {r.rmse_mean:.4f}±{r.rmse_sd:.4f} FR {r.fr_mean:.4f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.exists() or not sidecar_path(ckpt).exists():
        raise FileNotFoundError(f"checkpoint or sidecar missing: {ckpt}")
    model, doc = load_model(ckpt)
    cfg = model.config
    plan_doc = doc.get("plan") or {}
    trained_horizon = int(cfg.m * GLUCOSE_PERIOD_MIN)
    if args.horizon is not None and args.horizon != trained_horizon:
        raise CompatibilityError(f"horizon {args.horizon} min not in checkpoint (trained for {trained_horizon} min)", "horizon")
    data = Path(args.data)
    files = sorted(data.glob("*.csv")) if data.is_dir() else [data]
    if not files:
        raise FileNotFoundError(f"no subject CSV files under {data}")
    for f in files:
        rec = load_csv(f)
        missing = [m.value for m in cfg.aux if m not in rec.series]
        if missing:
            raise CompatibilityError(f"{f.name} lacks modalities {missing} required by features {list(cfg.features)}", "features")
        subj = prepare_subject(rec, cfg.T, cfg.m, plan_doc.get("stride", 1), cfg.features, plan_doc.get("train_ratio", 0.8))
        row = evaluate(model, subj).row(int(doc.get("run", 0)), subj.cohort, subj.subject_id)
        print(json.dumps(asdict(row), sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="glumind", description="Multimodal glucose forecasting experiments.")
    p.add_argument("--log-level", default=os.environ.get("GLUMIND_LOG", "WARNING"), help="logging level (env GLUMIND_LOG)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write synthetic subject CSVs and a manifest")
    g.add_argument("--cohorts", type=_cohorts, help="comma-separated cohort names")
    g.add_argument("--subjects", type=_positive, help="subjects per cohort")
    g.add_argument("--days", type=_positive)
    g.add_argument("--seed", type=int)
    g.add_argument("--plan", help="plan file whose cohort specs and defaults are used")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    r = sub.add_parser("run-sequence", help="sequential fine-tuning across cohorts")
    r.add_argument("--plan", required=True, help="plan JSON path or bundled name (demo, benchmark)")
    r.add_argument("--retention", choices=[k.value for k in RetentionKind])
    r.add_argument("--lambda", dest="lam", type=float, help="LwF distillation weight")
    r.add_argument("--epochs", type=int)
    r.add_argument("--runs", type=_positive)
    r.add_argument("--seed", type=int)
    r.add_argument("--data", dest="data_dir", help="directory of subject CSVs instead of generated data")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run_sequence)

    a = sub.add_parser("ablate", help="run one ablation grid")
    a.add_argument("--kind", required=True, choices=[k.value for k in AblationKind])
    a.add_argument("--plan", required=True)
    a.add_argument("--epochs", type=int)
    a.add_argument("--runs", type=_positive)
    a.add_argument("--seed", type=int)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_ablate)

    e = sub.add_parser("evaluate", help="score a checkpoint on subject CSVs")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True, help="subject CSV file or directory")
    e.add_argument("--horizon", type=int, help="horizon in minutes; must match the checkpoint")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=str(args.log_level).upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CompatibilityError as exc:
        print(f"incompatible ({exc.field}): {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except TrainingAbort as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (OSError, OutputError, ParseError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except GluMindError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
