"""Knowledge retention across sequential cohorts: distillation, EWC, replay,
and the forgetting metrics used to compare them."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from glumind.errors import ConfigurationError, DomainError, StateError
from glumind.model import GluMindModel, check_compatible
from glumind.signals.windows import Batch, concat_batches, stack
from glumind.tensor import Tape, Tensor, add, backward, mse, mul, no_grad, scale, sub, sum_all


class RetentionKind(str, enum.Enum):
    none = "none"
    lwf = "lwf"
    ewc = "ewc"
    er = "er"


@dataclass(frozen=True)
class RetentionMethod:
    kind: RetentionKind = RetentionKind.none
    lam: float = 1.0  # LwF distillation weight
    lambda_ewc: float = 100.0
    fisher_samples: int = 32
    buffer_cap: int = 512
    replay_ratio: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "kind", RetentionKind(self.kind))
        if self.lam < 0 or self.lambda_ewc < 0:
            raise ConfigurationError("retention weights must be >= 0")
        if not 0.0 <= self.replay_ratio <= 1.0:
            raise ConfigurationError(f"replay_ratio {self.replay_ratio} outside [0, 1]")
        if self.buffer_cap < 1 or self.fisher_samples < 1:
            raise ConfigurationError("buffer_cap and fisher_samples must be >= 1")

    @classmethod
    def from_dict(cls, d: Mapping | str) -> "RetentionMethod":
        if isinstance(d, str):
            return cls(RetentionKind(d.lower()))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown retention keys: {sorted(unknown)}")
        d = dict(d)
        if "kind" in d:
            d["kind"] = RetentionKind(str(d["kind"]).lower())
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @property
    def label(self) -> str:
        return {"none": "None", "lwf": "LwF", "ewc": "EWC", "er": "ER"}[self.kind.value]


# ---------------------------------------------------------------- LwF


def lwf_terms(model: GluMindModel, snapshot: GluMindModel, batch: Batch) -> tuple[Tensor, Tensor, Tensor]:
    """(prediction, fit loss, distillation loss).  The snapshot is run without recording."""
    check_compatible(model.config, snapshot.config)
    with no_grad():
        teacher = snapshot.forward_arrays(batch.history, batch.aux, batch.aux_aligned).data
    pred = model.forward_batch(batch)
    return pred, mse(pred, Tensor(batch.target)), mse(pred, Tensor(teacher))


def lwf_total_loss(model: GluMindModel, snapshot: GluMindModel, batch: Batch, lam: float = 1.0) -> Tensor:
    """Fit loss plus ``lam`` times the squared gap to the frozen snapshot's output."""
    _, fit, distill = lwf_terms(model, snapshot, batch)
    return add(fit, scale(distill, lam))


# ---------------------------------------------------------------- EWC


def ewc_penalty(params, anchor: Mapping[str, np.ndarray] | None, fisher: Mapping[str, np.ndarray] | None, lam: float) -> Tensor:
    """(lam / 2) * sum_j F_j (theta_j - anchor_j)^2 over every named parameter."""
    if anchor is None or fisher is None:
        raise StateError("EWC penalty needs an anchor and a Fisher estimate")
    total = None
    for name, p in params.items():
        if name not in anchor or name not in fisher:
            raise StateError(f"no anchor or Fisher entry for {name}")
        F = np.asarray(fisher[name])
        if np.any(F < 0):
            raise DomainError(f"negative Fisher entries for {name}")
        diff = sub(p, Tensor(anchor[name]))
        term = sum_all(mul(mul(diff, diff), Tensor(F)))
        total = term if total is None else add(total, term)
    return scale(total, lam / 2.0)


def estimate_fisher(model: GluMindModel, batches: Sequence[Batch], n_batches: int = 32) -> dict[str, np.ndarray]:
    """Diagonal empirical Fisher: mean squared gradient of the fit loss over batches."""
    used = list(batches)[:n_batches]
    if not used:
        raise StateError("Fisher estimate needs at least one batch")
    acc = {k: np.zeros_like(v.data) for k, v in model.params.items()}
    for batch in used:
        with Tape() as tape:
            loss = mse(model.forward_batch(batch), Tensor(batch.target))
        grads = backward(loss, tape, model.params)
        for k, g in grads.items():
            acc[k] += g * g
    return {k: v / len(used) for k, v in acc.items()}


@dataclass
class EwcState:
    anchor: dict[str, np.ndarray] | None = None
    fisher: dict[str, np.ndarray] | None = None

    @property
    def ready(self) -> bool:
        return self.anchor is not None

    def consolidate(self, model: GluMindModel, batches: Sequence[Batch], n_batches: int) -> None:
        """At a cohort boundary: add this cohort's Fisher and move the anchor."""
        fresh = estimate_fisher(model, batches, n_batches)
        if self.fisher is None:
            self.fisher = fresh
        else:
            self.fisher = {k: self.fisher[k] + fresh[k] for k in fresh}
        self.anchor = {k: v.data.copy() for k, v in model.params.items()}


# ---------------------------------------------------------------- ER


class ReservoirBuffer:
    """Fixed-capacity uniform sample of everything offered (algorithm R)."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        if capacity < 1:
            raise ConfigurationError("buffer capacity must be >= 1")
        self.capacity = capacity
        self.rng = rng
        self.items: list = []
        self.seen = 0

    def __len__(self) -> int:
        return len(self.items)

    def offer(self, item) -> None:
        self.seen += 1
        if len(self.items) < self.capacity:
            self.items.append(item)
            return
        j = int(self.rng.integers(self.seen))
        if j < self.capacity:
            self.items[j] = item

    def extend(self, items) -> None:
        for item in items:
            self.offer(item)


def er_mix_batch(current: Batch, buffer: ReservoirBuffer, replay_ratio: float, rng: np.random.Generator) -> Batch:
    """Swap ceil(ratio * B) current windows for uniform draws from the buffer."""
    B = len(current)
    if len(buffer) == 0 or replay_ratio == 0.0:
        return current
    k = min(math.ceil(replay_ratio * B - 1e-12), B)
    replace = len(buffer) < k
    picks = rng.choice(len(buffer), size=k, replace=replace)
    replayed = stack([buffer.items[i] for i in picks])
    if k == B:
        return replayed
    keep = np.sort(rng.choice(B, size=B - k, replace=False))
    return concat_batches([replayed, current.take(keep)])


# ---------------------------------------------------------------- forgetting metrics


def forgetting_metrics(rmse_initial: float, rmse_final: float) -> tuple[float, float, float]:
    """(ratio, absolute change, percent change) of final vs initial RMSE."""
    if not rmse_initial > 0:
        raise DomainError(f"rmse_initial must be positive, got {rmse_initial}")
    fr = rmse_final / rmse_initial
    return fr, rmse_final - rmse_initial, (fr - 1.0) * 100.0


@dataclass
class ForgettingRow:
    cohort: str
    rmse_initial: float
    rmse_final: float
    fr: float
    af: float
    bwt: float
    subject: str = ""

    @classmethod
    def build(cls, cohort: str, rmse_initial: float, rmse_final: float, subject: str = "") -> "ForgettingRow":
        return cls(cohort, rmse_initial, rmse_final, *forgetting_metrics(rmse_initial, rmse_final), subject=subject)


def _mean_rows(rows: Sequence[ForgettingRow]) -> dict[str, float]:
    if not rows:
        return {"fr": float("nan"), "af": float("nan"), "bwt": float("nan"), "n": 0}
    return {
        "fr": float(np.mean([r.fr for r in rows])),
        "af": float(np.mean([r.af for r in rows])),
        "bwt": float(np.mean([r.bwt for r in rows])),
        "n": len(rows),
    }


@dataclass
class ForgettingReport:
    """Cohort rows use window-pooled RMSE; subject rows keep per-subject RMSE.

    Averages skip the last cohort in the order (nothing trains after it, so its
    ratio is 1 by construction) unless it is the only cohort.
    """

    method: str
    cohort_order: list[str]
    rows: list[ForgettingRow]
    subject_rows: list[ForgettingRow] = field(default_factory=list)
    run: int = 0

    def _earlier(self, rows):
        if len(self.cohort_order) <= 1:
            return list(rows)
        return [r for r in rows if r.cohort != self.cohort_order[-1]]

    def averages(self) -> dict[str, dict[str, float]]:
        return {
            "cohort_mean": _mean_rows(self._earlier(self.rows)),
            "subject_mean": _mean_rows(self._earlier(self.subject_rows)),
        }

    @property
    def avg_fr(self) -> float:
        return self.averages()["cohort_mean"]["fr"]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "run": self.run,
            "cohort_order": list(self.cohort_order),
            "rows": [asdict(r) for r in self.rows],
            "subject_rows": [asdict(r) for r in self.subject_rows],
            "averages": self.averages(),
        }


def run_averages(reports: Sequence[ForgettingReport]) -> dict[str, float]:
    """Across-run mean and sd of each run's cohort-mean forgetting."""
    vals = {k: [r.averages()["cohort_mean"][k] for r in reports] for k in ("fr", "af", "bwt")}
    out = {}
    for k, v in vals.items():
        out[k] = float(np.mean(v))
        out[f"{k}_sd"] = float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
    out["runs"] = len(reports)
    return out

