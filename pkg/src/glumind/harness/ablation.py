"""Ablation grids over feature sets, attention variants, horizons, histories and retention."""

from __future__ import annotations

import enum
import logging
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from glumind.harness.plan import ExperimentPlan
from glumind.harness.sequence import SequenceResult, prepare_all, run_sequence
from glumind.model import CANONICAL_HORIZONS, Variant
from glumind.retention import RetentionKind, RetentionMethod
from glumind.signals.types import FEATURE_SET_GRID, GLUCOSE_PERIOD_MIN, feature_label

log = logging.getLogger(__name__)


class AblationKind(str, enum.Enum):
    features = "features"
    attention = "attention"
    horizons = "horizons"
    histories = "histories"
    retention = "retention"


@dataclass
class Cell:
    label: str
    plan: ExperimentPlan


def grid(kind: AblationKind | str, base: ExperimentPlan) -> list[Cell]:
    """Configurations for one ablation, everything else held at ``base``."""
    kind = AblationKind(kind)
    if kind is AblationKind.features:
        return [Cell(feature_label(fs), base.with_(feature_set=list(fs))) for fs in FEATURE_SET_GRID]
    if kind is AblationKind.attention:
        return [Cell(v.value, base.with_(model={**base.model, "variant": v.value})) for v in Variant]
    if kind is AblationKind.horizons:
        return [Cell(f"PH{int(m * GLUCOSE_PERIOD_MIN)}", base.with_(m=m)) for m in CANONICAL_HORIZONS]
    if kind is AblationKind.histories:
        return [Cell(f"T{T}", base.with_(T=T)) for T in base.histories]
    methods = [RetentionMethod(k, **_retention_params(base.retention)) for k in RetentionKind]
    return [Cell(m.label, base.with_(retention=m)) for m in methods]


def _retention_params(method: RetentionMethod) -> dict:
    d = method.to_dict()
    d.pop("kind")
    return d


@dataclass
class AblationRow:
    kind: str
    config: str
    cohort: str
    horizon_min: int
    rmse_mean: float
    rmse_sd: float
    mae_mean: float
    mae_sd: float
    pearson_mean: float | None
    pearson_sd: float | None
    fr_mean: float
    fr_sd: float
    runs: int


def _mean_sd(values):
    values = [v for v in values if v is not None]
    if not values:
        return None, None
    sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return float(np.mean(values)), sd


def summarize(kind: str, label: str, results: list[SequenceResult]) -> list[AblationRow]:
    """One row per cohort: subject-mean metrics per run, then mean and sd over runs."""
    per_run = defaultdict(lambda: defaultdict(list))
    horizon = None
    for res in results:
        by_cohort = defaultdict(list)
        for row in res.rows:
            if row.pooling == "final_step":
                by_cohort[row.cohort].append(row)
                horizon = row.horizon_min
        for cohort, rows in by_cohort.items():
            per_run[cohort]["rmse"].append(float(np.mean([r.rmse for r in rows])))
            per_run[cohort]["mae"].append(float(np.mean([r.mae for r in rows])))
            rs = [r.pearson_r for r in rows if r.pearson_r is not None]
            per_run[cohort]["pearson"].append(float(np.mean(rs)) if rs else None)
        for frow in res.report.rows:
            per_run[frow.cohort]["fr"].append(frow.fr)
    out = []
    for cohort in results[0].report.cohort_order:
        stats = per_run[cohort]
        rm, rs = _mean_sd(stats["rmse"])
        mm, ms = _mean_sd(stats["mae"])
        pm, ps = _mean_sd(stats["pearson"])
        fm, fs = _mean_sd(stats["fr"])
        out.append(AblationRow(kind, label, cohort, horizon, rm, rs, mm, ms, pm, ps, fm, fs, len(results)))
    return out


def run_ablation(kind: AblationKind | str, base: ExperimentPlan) -> list[AblationRow]:
    kind = AblationKind(kind)
    rows = []
    for cell in grid(kind, base):
        log.info("ablation %s: %s", kind.value, cell.label)
        # windows depend on T, m and features, so each cell prepares its own data
        data = prepare_all(cell.plan)
        results = [run_sequence(cell.plan, run, data) for run in range(cell.plan.runs)]
        rows.extend(summarize(kind.value, cell.label, results))
    return rows
