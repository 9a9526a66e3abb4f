"""Experiment plans: JSON files parsed strictly into a dataclass."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from glumind.errors import ConfigurationError
from glumind.model import ModelConfig, Variant
from glumind.retention import RetentionMethod
from glumind.signals.types import COHORT_PRESETS, DEFAULT_FEATURE_SET, Cohort, CohortSpec, aux_modalities

DEFAULT_ORDER = ("Healthy", "PreT2DM", "Oral", "Insulin")
MODEL_KEYS = ("d_model", "heads", "ff_hidden", "variant", "n_layers", "max_len")


@dataclass
class ExperimentPlan:
    cohort_order: list[str] = field(default_factory=lambda: list(DEFAULT_ORDER))
    subjects_per_cohort: int = 8
    days: int = 10
    T: int = 80
    m: int = 12
    stride: int = 1
    feature_set: list[str] = field(default_factory=lambda: list(DEFAULT_FEATURE_SET))
    retention: RetentionMethod = field(default_factory=RetentionMethod)
    epochs: int = 500
    lr: float = 0.001
    weight_decay: float = 0.01
    batch_size: int = 32
    runs: int = 5
    seed: int = 0
    train_ratio: float = 0.8
    model: dict[str, Any] = field(default_factory=dict)
    cohort_specs: dict[str, dict[str, float]] = field(default_factory=dict)
    histories: list[int] = field(default_factory=lambda: [16, 32, 48, 64])
    data_dir: str | None = None

    def __post_init__(self):
        self.cohort_order = [Cohort(c).value for c in self.cohort_order]
        self.feature_set = list(self.feature_set)
        aux_modalities(self.feature_set)
        if isinstance(self.retention, (Mapping, str)):
            self.retention = RetentionMethod.from_dict(self.retention)
        for name in ("subjects_per_cohort", "days", "T", "m", "stride", "batch_size", "runs"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if not self.cohort_order:
            raise ConfigurationError("cohort_order is empty")
        unknown = set(self.model) - set(MODEL_KEYS)
        if unknown:
            raise ConfigurationError(f"unknown model keys {sorted(unknown)}; accepted {list(MODEL_KEYS)}")
        for name, spec in self.cohort_specs.items():
            Cohort(name)
            self.cohort_spec(name)  # validates
        self.model_config()  # validates eagerly

    def cohort_spec(self, cohort: str) -> CohortSpec:
        base = asdict(COHORT_PRESETS[Cohort(cohort)])
        over = self.cohort_specs.get(cohort, {})
        unknown = set(over) - set(base)
        if unknown:
            raise ConfigurationError(f"unknown cohort spec keys {sorted(unknown)}")
        return CohortSpec(**{**base, **over})

    def model_config(self, run: int = 0) -> ModelConfig:
        kw = dict(self.model)
        if "variant" in kw:
            kw["variant"] = Variant(kw["variant"])
        return ModelConfig(T=self.T, m=self.m, features=tuple(self.feature_set), seed=self.seed + run, **kw)

    def with_(self, **changes) -> "ExperimentPlan":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["retention"] = self.retention.to_dict()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_TYPES = {f.name: f.type for f in fields(ExperimentPlan)}
_INT = {"subjects_per_cohort", "days", "T", "m", "stride", "epochs", "batch_size", "runs", "seed"}
_FLOAT = {"lr", "weight_decay", "train_ratio"}


def plan_from_dict(doc: Mapping) -> ExperimentPlan:
    if not isinstance(doc, Mapping):
        raise ConfigurationError("plan must be a JSON object")
    unknown = set(doc) - set(_TYPES)
    if unknown:
        raise ConfigurationError(f"unknown plan keys {sorted(unknown)}")
    for key, value in doc.items():
        if key in _INT and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigurationError(f"plan key {key!r} must be an integer, got {value!r}")
        if key in _FLOAT and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ConfigurationError(f"plan key {key!r} must be a number, got {value!r}")
    try:
        return ExperimentPlan(**doc)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"invalid plan: {exc}") from exc


def load_plan(path: str | Path) -> ExperimentPlan:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
    return plan_from_dict(doc)


def bundled_plan(name: str) -> Path:
    return Path(__file__).resolve().parent.parent / "plans" / f"{name}.json"
