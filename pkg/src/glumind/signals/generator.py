"""Synthetic multimodal subjects standing in for access-controlled CGM cohorts.

Everything is simulated on a 1-minute grid and then sampled at each
modality's native period.  Glucose is

    baseline + circadian + meal responses - activity dips + stress rises
    + slow wander + AR(1) sensor noise

clamped to the physiological range.
"""

from __future__ import annotations

import zlib

import numpy as np
from scipy.signal import lfilter

from glumind.errors import ConfigurationError
from glumind.signals.types import (
    COHORT_PRESETS,
    GLUCOSE_RANGE,
    NATIVE_PERIOD_MIN,
    STRESS_RANGE,
    Cohort,
    CohortSpec,
    Modality,
    SignalSeries,
    SubjectRecord,
)

MIN_PER_DAY = 1440
GAP_RATE = 0.02
MEAL_TIMES_MIN = (7.5 * 60, 12.5 * 60, 18.5 * 60)


def subject_seed(seed: int, subject_id: str) -> int:
    return (int(seed) ^ zlib.crc32(subject_id.encode("utf-8"))) & 0xFFFFFFFFFFFFFFFF


def _lag(x: np.ndarray, tau_min: float) -> np.ndarray:
    """Causal first-order lag with unit DC gain on a 1-minute grid."""
    a = np.exp(-1.0 / tau_min)
    return lfilter([1.0 - a], [1.0, -a], x)


def _ar1(rng: np.random.Generator, n: int, phi: float) -> np.ndarray:
    """Unit-variance stationary AR(1) path."""
    z = rng.standard_normal(n) * np.sqrt(1.0 - phi * phi)
    z[0] = rng.standard_normal()
    return lfilter([1.0], [1.0, -phi], z)


def _activity(rng: np.random.Generator, days: int):
    n = days * MIN_PER_DAY
    walk = np.zeros(n)
    run = np.zeros(n)
    for d in range(days):
        day0 = d * MIN_PER_DAY
        for _ in range(rng.poisson(6)):
            start = day0 + int(rng.uniform(7 * 60, 22 * 60))
            dur = int(rng.uniform(5, 45))
            walk[start : start + dur] = rng.uniform(80, 120)
        if rng.random() < 0.35:
            start = day0 + int(rng.uniform(6 * 60, 20 * 60))
            dur = int(rng.uniform(15, 40))
            run[start : start + dur] = rng.uniform(150, 175)
    sporadic = (rng.random(n) < 0.08) & (walk == 0)
    walk[sporadic] = rng.poisson(6, size=int(sporadic.sum()))
    walk[run > 0] = 0.0
    jitter = rng.normal(0.0, 3.0, size=n)
    walk = np.where(walk > 20, np.maximum(walk + jitter, 0.0), walk)
    run = np.where(run > 0, np.maximum(run + jitter, 0.0), run)
    walk_interval = np.where(walk > 20, 60.0, np.minimum(walk * 0.5, 60.0))
    run_interval = np.where(run > 0, 60.0, 0.0)
    return walk, walk_interval, run, run_interval


def _stress(rng: np.random.Generator, days: int) -> np.ndarray:
    n = days * MIN_PER_DAY
    level = 25.0 + 6.0 * _ar1(rng, n, np.exp(-1.0 / 60.0))
    bumps = np.zeros(n)
    for d in range(days):
        for _ in range(rng.poisson(2)):
            start = d * MIN_PER_DAY + int(rng.uniform(8 * 60, 21 * 60))
            bumps[start : start + int(rng.uniform(20, 90))] += rng.uniform(20, 50)
    return np.clip(level + _lag(bumps, 10.0), *STRESS_RANGE)


def _meal_drive(rng: np.random.Generator, days: int, amp: float) -> np.ndarray:
    n = days * MIN_PER_DAY
    impulses = np.zeros(n)
    for d in range(days):
        for t_meal in MEAL_TIMES_MIN:
            t = int(d * MIN_PER_DAY + t_meal + rng.normal(0.0, 30.0))
            if 0 <= t < n:
                impulses[t] += amp * rng.uniform(0.6, 1.4)
    # absorption (20 min) feeding a first-order decay (50 min), normalized to unit peak
    k = np.arange(6 * 60, dtype=float)
    kernel = np.exp(-k / 50.0) - np.exp(-k / 20.0)
    kernel /= kernel.max()
    return np.convolve(impulses, kernel)[:n]


def generate_subject(
    spec: CohortSpec,
    days: int,
    seed: int,
    subject_id: str = "subject",
    cohort: Cohort | str = Cohort.Healthy,
) -> SubjectRecord:
    if days < 1:
        raise ConfigurationError("days must be >= 1")
    n = days * MIN_PER_DAY
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(8)]
    r_phys, r_act, r_stress, r_meal, r_wander, r_noise, r_hr, r_gap = rngs

    # per-subject physiology varies around the cohort spec
    mult = r_phys.uniform(0.85, 1.15, size=5)
    g_sd, meal_amp, dip, stress_c, noise_sd = (
        spec.glucose_sd * mult[0],
        spec.meal_spike_amp * mult[1],
        spec.activity_dip_coeff * mult[2],
        spec.stress_coupling * mult[3],
        spec.noise_sd * mult[4],
    )
    phase = r_phys.uniform(-0.5, 0.5)

    walk, walk_iv, run, run_iv = _activity(r_act, days)
    stress = _stress(r_stress, days)
    heart = np.clip(
        62.0 + 0.25 * walk + 0.45 * run + 0.15 * (stress - 25.0) + 2.0 * _ar1(r_hr, n, 0.9),
        35.0,
        200.0,
    )

    t = np.arange(n, dtype=float)
    circadian = 0.6 * g_sd * np.sin(2 * np.pi * t / MIN_PER_DAY - np.pi / 2 + phase)
    meals = _meal_drive(r_meal, days, meal_amp)
    intensity = walk + 1.5 * run
    dips = dip * _lag(intensity, 30.0)
    rises = stress_c * _lag(stress - 25.0, 45.0)
    wander = g_sd * _ar1(r_wander, n, np.exp(-1.0 / 120.0))
    glucose_min = spec.baseline_glucose + circadian + meals - dips + rises + wander

    g_step = int(NATIVE_PERIOD_MIN[Modality.Glucose])
    glucose = glucose_min[::g_step]
    noise = noise_sd * _ar1(r_noise, glucose.size, 0.5)
    glucose = np.clip(glucose + noise, *GLUCOSE_RANGE)

    raw = {
        Modality.Glucose: glucose,
        Modality.WalkSteps: walk,
        Modality.WalkInterval: walk_iv,
        Modality.RunSteps: run,
        Modality.RunInterval: run_iv,
        Modality.Stress: stress[:: int(NATIVE_PERIOD_MIN[Modality.Stress])],
        Modality.HeartRate: heart,
    }
    series = {}
    for mod, values in raw.items():
        values = values.astype(np.float64).copy()
        gaps = r_gap.random(values.size) < GAP_RATE
        gaps[0] = gaps[-1] = False
        values[gaps] = np.nan
        series[mod] = SignalSeries(mod, NATIVE_PERIOD_MIN[mod], 0.0, values)
    return SubjectRecord(subject_id, Cohort(cohort), series)


def generate_cohort(
    cohort: Cohort | str,
    n_subjects: int,
    days: int,
    seed: int,
    spec: CohortSpec | None = None,
) -> list[SubjectRecord]:
    cohort = Cohort(cohort)
    spec = spec or COHORT_PRESETS[cohort]
    out = []
    for i in range(n_subjects):
        sid = f"{cohort.value}-{i:03d}"
        out.append(generate_subject(spec, days, subject_seed(seed, sid), sid, cohort))
    return out
