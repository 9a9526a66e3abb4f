"""Subject CSV files (``time_min,modality,value``) and generator manifests."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from glumind.errors import ParseError
from glumind.signals.types import UNITS, Cohort, CohortSpec, Modality, SignalSeries, SubjectRecord

HEADER = ["time_min", "modality", "value"]


def _fmt(x: float) -> str:
    return "" if np.isnan(x) else repr(float(x))


def write_csv(rec: SubjectRecord, path: str | Path) -> None:
    """Rows sorted by (modality name, time); gaps become empty value cells."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for mod in sorted(rec.series, key=lambda m: m.value):
            s = rec.series[mod]
            for t, v in zip(s.times, s.values):
                w.writerow([repr(float(t)), mod.value, _fmt(v)])


def _cohort_from_stem(stem: str) -> Cohort | None:
    head = stem.split("-", 1)[0]
    try:
        return Cohort(head)
    except ValueError:
        return None


def load_csv(path: str | Path, subject_id: str | None = None, cohort: Cohort | str | None = None) -> SubjectRecord:
    """Parse a subject CSV.  Line numbers in errors count the header as line 1."""
    path = Path(path)
    accepted = sorted(m.value for m in Modality)
    times: dict[Modality, list[float]] = {}
    values: dict[Modality, list[float]] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != HEADER:
            raise ParseError(f"expected header {','.join(HEADER)}, got {header}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", line=lineno)
            t_raw, mod_raw, v_raw = (c.strip() for c in row)
            try:
                mod = Modality(mod_raw)
            except ValueError:
                raise ParseError(f"unknown modality {mod_raw!r}; accepted: {', '.join(accepted)}", line=lineno) from None
            try:
                t = float(t_raw)
                v = float(v_raw) if v_raw else float("nan")
            except ValueError:
                raise ParseError(f"non-numeric cell in {row}", line=lineno) from None
            if not np.isfinite(t) or (v_raw and not np.isfinite(v)):
                raise ParseError(f"non-finite cell in {row}", line=lineno)
            ts = times.setdefault(mod, [])
            if ts and t <= ts[-1]:
                raise ParseError(f"{mod.value} timestamps not strictly increasing ({ts[-1]} then {t})", line=lineno)
            ts.append(t)
            values.setdefault(mod, []).append(v)

    if Modality.Glucose not in times:
        raise ParseError("file has no Glucose rows")
    series = {}
    for mod, ts in times.items():
        arr_t = np.asarray(ts)
        if arr_t.size > 1:
            steps = np.diff(arr_t)
            period = float(np.min(steps))
            ratio = steps / period
            if np.any(np.abs(ratio - np.round(ratio)) > 1e-6):
                raise ParseError(f"{mod.value} timestamps are not on a regular grid")
            idx = np.round((arr_t - arr_t[0]) / period).astype(int)
            vals = np.full(idx[-1] + 1, np.nan)
            vals[idx] = values[mod]
        else:
            period = 5.0 if mod is Modality.Glucose else 1.0
            vals = np.asarray(values[mod])
        series[mod] = SignalSeries(mod, period, float(arr_t[0]), vals, UNITS[mod])

    sid = subject_id or path.stem
    coh = cohort or _cohort_from_stem(path.stem) or Cohort.Healthy
    return SubjectRecord(sid, Cohort(coh), series)


def write_manifest(path: str | Path, entries: list[dict], seed: int, days: int) -> None:
    periods = {}
    for e in entries:
        periods.update(e.get("periods_min", {}))
    doc = {"seed": seed, "days": days, "periods_min": periods, "subjects": entries}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def manifest_entry(rec: SubjectRecord, spec: CohortSpec, file: str) -> dict:
    return {
        "subject_id": rec.subject_id,
        "cohort": rec.cohort.value,
        "file": file,
        "cohort_spec": asdict(spec),
        "periods_min": {m.value: s.period_min for m, s in sorted(rec.series.items(), key=lambda kv: kv[0].value)},
    }
