"""CSV and JSON writers with fixed column order and 4-decimal floats."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, fields
from pathlib import Path
from typing import Sequence

from glumind.errors import GluMindError
from glumind.harness.metrics import MetricsRow
from glumind.harness.plan import ExperimentPlan
from glumind.retention import ForgettingReport

METRICS_COLUMNS = ["run", "cohort", "subject", "horizon_min", "rmse", "mae", "pearson_r"]
FORGETTING_COLUMNS = ["cohort", "rmse_initial", "rmse_final", "fr", "af", "bwt"]


class OutputError(GluMindError, OSError):
    pass


def fmt(value) -> str:
    """Render a cell: floats with 4 decimals, None and NaN as empty."""
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        out = f"{value:.4f}"
        return "0.0000" if out == "-0.0000" else out
    return str(value)


def _round(value):
    if isinstance(value, float):
        return None if math.isnan(value) else float(fmt(value))
    if isinstance(value, dict):
        return {k: _round(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_round(v) for v in value]
    return value


def write_table(path: str | Path, columns: Sequence[str], records: Sequence[dict]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for rec in records:
                w.writerow([fmt(rec.get(c)) for c in columns])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def write_json(path: str | Path, doc) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_round(doc), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def emit_metrics(
    rows: Sequence[MetricsRow],
    reports: Sequence[ForgettingReport],
    out_dir: str | Path,
    plan: ExperimentPlan | None = None,
    formats: Sequence[str] = ("csv", "json"),
) -> list[Path]:
    """Write metrics, forgetting reports and a plan echo into ``out_dir``.

    ``metrics.csv`` holds last-forecast-step rows, ``metrics_all_steps.csv``
    pools every forecast step.
    """
    out = Path(out_dir)
    written = []
    final = [asdict(r) for r in rows if r.pooling == "final_step"]
    every = [asdict(r) for r in rows if r.pooling != "final_step"]
    cohort_rows = [asdict(r) for rep in reports for r in rep.rows]
    subject_rows = [{**asdict(r), "run": rep.run} for rep in reports for r in rep.subject_rows]
    if "csv" in formats:
        for name, cols, recs in (
            ("metrics.csv", METRICS_COLUMNS, final),
            ("metrics_all_steps.csv", METRICS_COLUMNS, every),
            ("forgetting.csv", FORGETTING_COLUMNS, cohort_rows),
            ("forgetting_subjects.csv", ["run", "subject", *FORGETTING_COLUMNS], subject_rows),
        ):
            write_table(out / name, cols, recs)
            written.append(out / name)
    if "json" in formats:
        doc = {
            "metrics": final,
            "metrics_all_steps": every,
            "forgetting": [rep.to_dict() for rep in reports],
            "plan": plan.to_dict() if plan else None,
        }
        write_json(out / "metrics.json", doc)
        written.append(out / "metrics.json")
    if plan is not None:
        try:
            (out / "plan.json").write_text(plan.to_json())
        except OSError as exc:
            raise OutputError(f"cannot write {out / 'plan.json'}: {exc}") from exc
        written.append(out / "plan.json")
    return written


def emit_ablation(rows, out_dir: str | Path, kind: str, plan: ExperimentPlan | None = None) -> list[Path]:
    out = Path(out_dir)
    recs = [asdict(r) for r in rows]
    columns = [f.name for f in fields(rows[0])] if rows else ["kind", "config", "cohort"]
    write_table(out / f"ablation_{kind}.csv", columns, recs)
    write_json(out / f"ablation_{kind}.json", {"rows": recs, "plan": plan.to_dict() if plan else None})
    paths = [out / f"ablation_{kind}.csv", out / f"ablation_{kind}.json"]
    if plan is not None:
        (out / "plan.json").write_text(plan.to_json())
        paths.append(out / "plan.json")
    return paths


def read_table(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))

