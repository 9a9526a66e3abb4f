from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from glumind.errors import ConfigurationError

GLUCOSE_PERIOD_MIN = 5.0
GLUCOSE_RANGE = (40.0, 400.0)
STRESS_RANGE = (0.0, 100.0)


class Modality(str, enum.Enum):
    Glucose = "Glucose"
    WalkSteps = "WalkSteps"
    WalkInterval = "WalkInterval"
    RunSteps = "RunSteps"
    RunInterval = "RunInterval"
    Stress = "Stress"
    HeartRate = "HeartRate"


class Cohort(str, enum.Enum):
    Healthy = "Healthy"
    PreT2DM = "PreT2DM"
    Oral = "Oral"
    Insulin = "Insulin"


UNITS = {
    Modality.Glucose: "mg/dL",
    Modality.WalkSteps: "steps/min",
    Modality.WalkInterval: "s/min",
    Modality.RunSteps: "steps/min",
    Modality.RunInterval: "s/min",
    Modality.Stress: "index",
    Modality.HeartRate: "bpm",
}

NATIVE_PERIOD_MIN = {
    Modality.Glucose: 5.0,
    Modality.WalkSteps: 1.0,
    Modality.WalkInterval: 1.0,
    Modality.RunSteps: 1.0,
    Modality.RunInterval: 1.0,
    Modality.Stress: 3.0,
    Modality.HeartRate: 1.0,
}

# feature-set tokens used by the ablation tables
FEATURE_GROUPS: dict[str, tuple[Modality, ...]] = {
    "BG": (),
    "W": (Modality.WalkSteps, Modality.WalkInterval),
    "R": (Modality.RunSteps, Modality.RunInterval),
    "Stress": (Modality.Stress,),
    "HR": (Modality.HeartRate,),
}
AUX_ORDER = (
    Modality.WalkSteps,
    Modality.WalkInterval,
    Modality.RunSteps,
    Modality.RunInterval,
    Modality.Stress,
    Modality.HeartRate,
)
FEATURE_SET_GRID: tuple[tuple[str, ...], ...] = (
    ("BG",),
    ("BG", "W"),
    ("BG", "Stress"),
    ("BG", "W", "R"),
    ("BG", "W", "Stress"),
    ("BG", "W", "HR"),
    ("BG", "W", "Stress", "HR"),
)
DEFAULT_FEATURE_SET = ("BG", "W", "Stress", "HR")


def feature_label(features) -> str:
    return "+".join(features)


def aux_modalities(features) -> tuple[Modality, ...]:
    """Auxiliary modalities for a feature set, in canonical order."""
    features = tuple(features)
    unknown = [f for f in features if f not in FEATURE_GROUPS]
    if unknown:
        raise ConfigurationError(f"unknown feature tokens {unknown}; accepted: {sorted(FEATURE_GROUPS)}")
    if "BG" not in features:
        raise ConfigurationError("feature set must contain BG")
    wanted = {m for f in features for m in FEATURE_GROUPS[f]}
    return tuple(m for m in AUX_ORDER if m in wanted)


@dataclass
class SignalSeries:
    """One modality sampled on a regular grid; NaN marks a gap."""

    modality: Modality
    period_min: float
    t0_min: float
    values: np.ndarray
    units: str = ""

    def __post_init__(self):
        self.modality = Modality(self.modality)
        if self.period_min <= 0:
            raise ConfigurationError("period_min must be positive")
        self.values = np.asarray(self.values, dtype=np.float64)
        if not self.units:
            self.units = UNITS[self.modality]

    def __len__(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0_min + self.period_min * np.arange(self.values.size)

    @property
    def has_gaps(self) -> bool:
        return bool(np.isnan(self.values).any())

    def same_as(self, other: "SignalSeries") -> bool:
        return (
            self.modality == other.modality
            and self.period_min == other.period_min
            and self.t0_min == other.t0_min
            and self.units == other.units
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


@dataclass
class SubjectRecord:
    subject_id: str
    cohort: Cohort
    series: dict[Modality, SignalSeries] = field(default_factory=dict)

    def __post_init__(self):
        self.cohort = Cohort(self.cohort)
        if Modality.Glucose not in self.series:
            raise ConfigurationError(f"subject {self.subject_id} has no Glucose series")

    @property
    def glucose(self) -> SignalSeries:
        return self.series[Modality.Glucose]

    def same_as(self, other: "SubjectRecord") -> bool:
        return (
            self.subject_id == other.subject_id
            and self.cohort == other.cohort
            and set(self.series) == set(other.series)
            and all(self.series[m].same_as(other.series[m]) for m in self.series)
        )


@dataclass
class WindowSample:
    """One training example.

    ``aux_windows`` hold native-rate samples over the history's wall-clock
    span; ``aux_aligned`` hold the same signals resampled onto the 5-minute
    glucose grid (length T).
    """

    target_history: np.ndarray
    aux_windows: dict[Modality, np.ndarray]
    target_future: np.ndarray
    aux_aligned: dict[Modality, np.ndarray] = field(default_factory=dict)
    start: int = 0
    subject_id: str = ""


@dataclass(frozen=True)
class CohortSpec:
    baseline_glucose: float
    glucose_sd: float
    meal_spike_amp: float
    activity_dip_coeff: float
    stress_coupling: float
    noise_sd: float

    def __post_init__(self):
        amps = (self.glucose_sd, self.meal_spike_amp, self.activity_dip_coeff, self.stress_coupling, self.noise_sd)
        if any(a < 0 for a in amps):
            raise ConfigurationError(f"cohort amplitudes must be >= 0: {self}")
        if not 70.0 <= self.baseline_glucose <= 220.0:
            raise ConfigurationError(f"baseline_glucose {self.baseline_glucose} outside [70, 220]")


COHORT_PRESETS: dict[Cohort, CohortSpec] = {
    Cohort.Healthy: CohortSpec(95.0, 6.0, 30.0, 0.15, 0.05, 2.0),
    Cohort.PreT2DM: CohortSpec(110.0, 10.0, 45.0, 0.20, 0.08, 3.0),
    Cohort.Oral: CohortSpec(145.0, 16.0, 65.0, 0.25, 0.12, 4.0),
    Cohort.Insulin: CohortSpec(170.0, 26.0, 85.0, 0.30, 0.15, 5.0),
}
