"""Sequential fine-tuning across subjects and cohorts with forgetting measurement."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from glumind.errors import InsufficientDataError, SplitError, TrainingAbort
from glumind.harness.metrics import MetricsRow
from glumind.harness.plan import ExperimentPlan
from glumind.harness.training import Evaluation, RetentionContext, evaluate, pooled, train_subject
from glumind.model import GluMindModel, save_model
from glumind.retention import ForgettingReport, ForgettingRow
from glumind.signals.generator import generate_cohort
from glumind.signals.io import load_csv
from glumind.signals.types import Cohort, SubjectRecord
from glumind.signals.windows import PreparedSubject, prepare_subject

log = logging.getLogger(__name__)


def load_records(plan: ExperimentPlan, cohort: str) -> list[SubjectRecord]:
    """Subjects for one cohort, generated from the plan seed or read from ``data_dir``."""
    if plan.data_dir:
        files = sorted(Path(plan.data_dir).glob(f"{cohort}-*.csv"))[: plan.subjects_per_cohort]
        return [load_csv(f) for f in files]
    return generate_cohort(cohort, plan.subjects_per_cohort, plan.days, cohort_seed(plan.seed, cohort), plan.cohort_spec(cohort))


def cohort_seed(seed: int, cohort: str) -> int:
    return seed * 1000 + list(Cohort).index(Cohort(cohort))


def prepare_cohort(plan: ExperimentPlan, cohort: str, records: list[SubjectRecord] | None = None) -> list[PreparedSubject]:
    out = []
    for rec in records if records is not None else load_records(plan, cohort):
        try:
            out.append(prepare_subject(rec, plan.T, plan.m, plan.stride, plan.feature_set, plan.train_ratio))
        except (InsufficientDataError, SplitError) as exc:
            log.warning("skipping %s: %s", rec.subject_id, exc)
    if not out:
        raise TrainingAbort(f"cohort {cohort} has no usable subjects")
    return out


def prepare_all(plan: ExperimentPlan) -> dict[str, list[PreparedSubject]]:
    return {c: prepare_cohort(plan, c) for c in plan.cohort_order}


@dataclass
class SequenceResult:
    report: ForgettingReport
    rows: list[MetricsRow]
    model: GluMindModel
    epoch_losses: dict[str, list[float]] = field(default_factory=dict)
    checkpoints: list[Path] = field(default_factory=list)


def _forgetting_rows(cohort, initial: dict[str, Evaluation], final: dict[str, Evaluation]):
    cohort_row = ForgettingRow.build(
        cohort,
        pooled(list(initial.values())).row(0, cohort, "").rmse,
        pooled(list(final.values())).row(0, cohort, "").rmse,
    )
    subject_rows = [
        ForgettingRow.build(cohort, initial[s].row(0, cohort, s).rmse, final[s].row(0, cohort, s).rmse, subject=s)
        for s in initial
    ]
    return cohort_row, subject_rows


def run_sequence(
    plan: ExperimentPlan,
    run: int = 0,
    data: dict[str, list[PreparedSubject]] | None = None,
    checkpoint_dir: str | Path | None = None,
) -> SequenceResult:
    """Thread one model through every subject of every cohort in order.

    ``rmse_initial`` for a cohort is its pooled test RMSE (last forecast step,
    mg/dL) right after its own pass; ``rmse_final`` is the same quantity after
    the whole sequence.
    """
    data = data if data is not None else prepare_all(plan)
    model = GluMindModel(plan.model_config(run))
    ctx = RetentionContext.fresh(plan.retention, plan.seed + run)
    rows: list[MetricsRow] = []
    losses: dict[str, list[float]] = {}
    initial: dict[str, dict[str, Evaluation]] = {}
    checkpoints = []

    for cohort in plan.cohort_order:
        subjects = data[cohort]
        for subj in subjects:
            res = train_subject(model, subj, plan, ctx, run)
            rows.extend(res.rows)
            losses[subj.subject_id] = res.epoch_losses
        initial[cohort] = {s.subject_id: evaluate(model, s) for s in subjects}
        if checkpoint_dir is not None:
            Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
            path = Path(checkpoint_dir) / f"run{run}_after_{cohort}.glum"
            save_model(model, path, {"plan": plan.to_dict(), "run": run, "cohort": cohort})
            checkpoints.append(path)
        ctx.end_cohort(model, [w for s in subjects for w in s.train], plan.batch_size)

    cohort_rows, subject_rows = [], []
    for cohort in plan.cohort_order:
        final = {s.subject_id: evaluate(model, s) for s in data[cohort]}
        c_row, s_rows = _forgetting_rows(cohort, initial[cohort], final)
        cohort_rows.append(c_row)
        subject_rows.extend(s_rows)
    report = ForgettingReport(plan.retention.label, list(plan.cohort_order), cohort_rows, subject_rows, run)
    return SequenceResult(report, rows, model, losses, checkpoints)
