from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from glumind.errors import ConfigurationError, InsufficientDataError, SplitError
from glumind.signals.preprocess import apply_z, clean_subject, resample_to_grid
from glumind.signals.types import (
    GLUCOSE_PERIOD_MIN,
    Modality,
    SignalSeries,
    SubjectRecord,
    WindowSample,
    aux_modalities,
)

_TIME_TOL = 1e-9


def native_window_length(T: int, period_min: float) -> int:
    return int(round(T * GLUCOSE_PERIOD_MIN / period_min))


def window_count(length: int, T: int, m: int, stride: int) -> int:
    if length < T + m:
        raise InsufficientDataError(T + m, length)
    return (length - T - m) // stride + 1


def _native_slice(s: SignalSeries, t_end: float, n: int) -> slice:
    """Indices of the ``n`` samples ending strictly before ``t_end``."""
    last = int(math.ceil((t_end - s.t0_min) / s.period_min - _TIME_TOL)) - 1
    first = last - n + 1
    if first < 0 or last >= len(s):
        raise InsufficientDataError(last + 1, len(s), f"{s.modality.value} samples")
    return slice(first, last + 1)


def make_windows(
    rec: SubjectRecord,
    T: int,
    m: int,
    stride: int = 1,
    features: Sequence[str] = ("BG",),
    aligned: bool = True,
) -> list[WindowSample]:
    """Cut (history, future) windows; series must already be gap-free.

    Auxiliary windows are taken at native rate over the history's wall-clock
    span and always end strictly before the first target timestamp.
    """
    if stride < 1 or T < 1 or m < 1:
        raise ConfigurationError("T, m and stride must be >= 1")
    g = rec.glucose
    if g.period_min != GLUCOSE_PERIOD_MIN:
        raise ConfigurationError(f"glucose period must be {GLUCOSE_PERIOD_MIN} min")
    if any(s.has_gaps for s in rec.series.values()):
        raise ConfigurationError("make_windows needs gap-free series; run interpolate_gaps first")
    mods = aux_modalities(features)
    missing = [mod.value for mod in mods if mod not in rec.series]
    if missing:
        raise ConfigurationError(f"subject {rec.subject_id} lacks modalities {missing}")
    n = window_count(len(g), T, m, stride)

    grids = {}
    if aligned:
        for mod in mods:
            grids[mod] = resample_to_grid(rec.series[mod], GLUCOSE_PERIOD_MIN, g.t0_min, len(g)).values

    out = []
    for k in range(n):
        s0 = k * stride
        t_end = g.t0_min + GLUCOSE_PERIOD_MIN * (s0 + T)
        aux = {}
        for mod in mods:
            series = rec.series[mod]
            aux[mod] = series.values[_native_slice(series, t_end, native_window_length(T, series.period_min))].copy()
        out.append(
            WindowSample(
                target_history=g.values[s0 : s0 + T].copy(),
                aux_windows=aux,
                target_future=g.values[s0 + T : s0 + T + m].copy(),
                aux_aligned={mod: grids[mod][s0 : s0 + T].copy() for mod in grids},
                start=s0,
                subject_id=rec.subject_id,
            )
        )
    return out


def split_index(n: int, ratio: float) -> int:
    if not 0.0 < ratio < 1.0:
        raise SplitError(f"ratio {ratio} must lie strictly between 0 and 1")
    k = math.ceil(ratio * n - 1e-12)
    if k <= 0 or k >= n:
        raise SplitError(f"split of {n} windows at ratio {ratio} leaves one side empty")
    return k


def split_train_test(samples: Sequence, ratio: float = 0.8):
    """Chronological split: the first ceil(ratio * N) windows train."""
    k = split_index(len(samples), ratio)
    return list(samples[:k]), list(samples[k:])


@dataclass
class Batch:
    history: np.ndarray  # (B, T)
    aux: dict[Modality, np.ndarray]  # native (B, t_i)
    aux_aligned: dict[Modality, np.ndarray]  # (B, T)
    target: np.ndarray  # (B, m)
    starts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    subjects: tuple[str, ...] = ()

    def __len__(self) -> int:
        return self.history.shape[0]

    def take(self, idx) -> "Batch":
        idx = np.asarray(idx, dtype=int)
        return Batch(
            self.history[idx],
            {k: v[idx] for k, v in self.aux.items()},
            {k: v[idx] for k, v in self.aux_aligned.items()},
            self.target[idx],
            self.starts[idx],
            tuple(self.subjects[i] for i in idx),
        )


def stack(samples: Sequence[WindowSample]) -> Batch:
    if not samples:
        raise ConfigurationError("cannot stack an empty window list")
    mods = list(samples[0].aux_windows)
    return Batch(
        history=np.stack([s.target_history for s in samples]),
        aux={mod: np.stack([s.aux_windows[mod] for s in samples]) for mod in mods},
        aux_aligned={mod: np.stack([s.aux_aligned[mod] for s in samples]) for mod in samples[0].aux_aligned},
        target=np.stack([s.target_future for s in samples]),
        starts=np.array([s.start for s in samples], dtype=int),
        subjects=tuple(s.subject_id for s in samples),
    )


def concat_batches(batches: Sequence[Batch]) -> Batch:
    batches = [b for b in batches if len(b)]
    return Batch(
        np.concatenate([b.history for b in batches]),
        {k: np.concatenate([b.aux[k] for b in batches]) for k in batches[0].aux},
        {k: np.concatenate([b.aux_aligned[k] for b in batches]) for k in batches[0].aux_aligned},
        np.concatenate([b.target for b in batches]),
        np.concatenate([b.starts for b in batches]),
        sum((b.subjects for b in batches), ()),
    )


@dataclass
class PreparedSubject:
    subject_id: str
    cohort: str
    train: list[WindowSample]
    test: list[WindowSample]
    stats: dict[Modality, tuple[float, float]]

    @property
    def glucose_stats(self) -> tuple[float, float]:
        return self.stats[Modality.Glucose]


def prepare_subject(
    rec: SubjectRecord,
    T: int,
    m: int,
    stride: int = 1,
    features: Sequence[str] = ("BG",),
    train_ratio: float = 0.8,
) -> PreparedSubject:
    """Gap filling, train-only z-normalization, windowing and chronological split."""
    mods = aux_modalities(features)
    keep = {Modality.Glucose, *mods}
    missing = [mod.value for mod in keep if mod not in rec.series]
    if missing:
        raise ConfigurationError(f"subject {rec.subject_id} lacks modalities {missing}")
    rec = clean_subject(SubjectRecord(rec.subject_id, rec.cohort, {k: v for k, v in rec.series.items() if k in keep}))
    g = rec.glucose
    n = window_count(len(g), T, m, stride)
    n_train = split_index(n, train_ratio)

    # statistics only see samples that some training window touches
    t_cut = g.t0_min + GLUCOSE_PERIOD_MIN * ((n_train - 1) * stride + T + m)
    stats = {}
    normalized = {}
    for mod, s in rec.series.items():
        seen = s.values[s.times < t_cut - _TIME_TOL]
        mean, sd = float(seen.mean()), float(seen.std())
        stats[mod] = (mean, sd)
        normalized[mod] = apply_z(s, mean, sd)
    windows = make_windows(SubjectRecord(rec.subject_id, rec.cohort, normalized), T, m, stride, features)
    return PreparedSubject(rec.subject_id, rec.cohort.value, windows[:n_train], windows[n_train:], stats)
