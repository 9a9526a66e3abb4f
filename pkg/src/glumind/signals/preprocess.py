from __future__ import annotations

from dataclasses import replace

import numpy as np

from glumind.errors import ConfigurationError, EmptySeriesError
from glumind.signals.types import SignalSeries, SubjectRecord

_TIME_TOL = 1e-9


def interpolate_gaps(s: SignalSeries) -> SignalSeries:
    """Fill interior gaps linearly; leading/trailing gaps are trimmed."""
    v = s.values
    ok = ~np.isnan(v)
    if not ok.any():
        raise EmptySeriesError(f"{s.modality.value} series has no observed samples")
    first, last = np.flatnonzero(ok)[[0, -1]]
    v = v[first : last + 1]
    ok = ok[first : last + 1]
    idx = np.arange(v.size)
    filled = v.copy()
    if not ok.all():
        filled[~ok] = np.interp(idx[~ok], idx[ok], v[ok])
    return replace(s, t0_min=s.t0_min + first * s.period_min, values=filled)


def normalize_z(s: SignalSeries) -> tuple[SignalSeries, float, float]:
    """Z-score with population sd; a constant series maps to zeros with sd 0."""
    if len(s) == 0 or s.has_gaps:
        raise EmptySeriesError("normalize_z needs a non-empty gap-free series")
    mean = float(s.values.mean())
    sd = float(s.values.std())
    return apply_z(s, mean, sd), mean, sd


def apply_z(s: SignalSeries, mean: float, sd: float) -> SignalSeries:
    if sd == 0.0:
        return replace(s, values=np.zeros_like(s.values))
    return replace(s, values=(s.values - mean) / sd)


def invert_z(values, mean: float, sd: float) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * (sd if sd > 0 else 1.0) + mean


def resample_to_grid(
    s: SignalSeries,
    period_out_min: float,
    t0_out: float | None = None,
    n_out: int | None = None,
) -> SignalSeries:
    """Resample onto ``t0_out + k * period_out_min``.

    Downsampling takes the mean of input samples in ``[t_k, t_k + period)``
    (an empty interval at the series tail repeats the last earlier sample);
    upsampling interpolates linearly at ``t_k``.  Without ``n_out`` the grid
    runs up to the last input timestamp.
    """
    if period_out_min <= 0:
        raise ConfigurationError("period_out_min must be positive")
    if s.has_gaps:
        raise ConfigurationError("resample_to_grid expects a gap-free series")
    t0 = s.t0_min if t0_out is None else float(t0_out)
    times = s.times
    if len(s) == 0:
        raise EmptySeriesError("cannot resample an empty series")
    if n_out is None:
        n_out = int(np.floor((times[-1] - t0) / period_out_min + _TIME_TOL)) + 1
    if n_out <= 0:
        raise EmptySeriesError("resampled span is empty")
    grid = t0 + period_out_min * np.arange(n_out)

    shift = (t0 - s.t0_min) / s.period_min
    if period_out_min == s.period_min and abs(shift - round(shift)) < _TIME_TOL:
        offset = int(round(shift))
        if offset < 0 or offset + n_out > len(s):
            raise EmptySeriesError("requested grid falls outside the series")
        values = s.values[offset : offset + n_out].copy()
    elif period_out_min > s.period_min:
        # window k covers input indices [lo_k, hi_k)
        lo = np.ceil((grid - s.t0_min) / s.period_min - _TIME_TOL).astype(int)
        hi = np.ceil((grid + period_out_min - s.t0_min) / s.period_min - _TIME_TOL).astype(int)
        lo = np.clip(lo, 0, len(s))
        hi = np.clip(hi, 0, len(s))
        if (hi <= 0).any():
            raise EmptySeriesError("an output interval precedes the series")
        # an interval with no samples (series tail) holds the last earlier sample
        empty = hi <= lo
        lo = np.where(empty, hi - 1, lo)
        values = _window_means(s.values, lo, hi)
    else:
        if grid[0] < times[0] - _TIME_TOL or grid[-1] > times[-1] + _TIME_TOL:
            raise EmptySeriesError("upsampling grid extends beyond the series")
        values = np.interp(grid, times, s.values)
    return SignalSeries(s.modality, period_out_min, t0, values, s.units)


def _window_means(v: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    # anchored on each window's first sample so constant input stays exact
    out = np.empty(lo.size)
    for k, (a, b) in enumerate(zip(lo, hi)):
        seg = v[a:b]
        out[k] = seg[0] + (seg - seg[0]).mean()
    return out


def trim_to_common_span(rec: SubjectRecord) -> SubjectRecord:
    """Restrict every series to the intersection of their time spans."""
    start = max(s.t0_min for s in rec.series.values())
    end = min(s.times[-1] for s in rec.series.values())
    if end < start:
        raise EmptySeriesError(f"subject {rec.subject_id}: series spans do not overlap")
    out = {}
    for mod, s in rec.series.items():
        lo = int(np.ceil((start - s.t0_min) / s.period_min - _TIME_TOL))
        hi = int(np.floor((end - s.t0_min) / s.period_min + _TIME_TOL))
        out[mod] = replace(s, t0_min=s.t0_min + lo * s.period_min, values=s.values[lo : hi + 1].copy())
    return SubjectRecord(rec.subject_id, rec.cohort, out)


def clean_subject(rec: SubjectRecord) -> SubjectRecord:
    """Interpolate every series, then trim to the common span."""
    series = {mod: interpolate_gaps(s) for mod, s in rec.series.items()}
    return trim_to_common_span(SubjectRecord(rec.subject_id, rec.cohort, series))
