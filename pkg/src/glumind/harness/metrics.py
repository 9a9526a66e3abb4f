from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from glumind.errors import ShapeError, UndefinedCorrelationError


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(truth, dtype=np.float64).ravel()
    if p.size != t.size:
        raise ShapeError(f"prediction length {p.size} != truth length {t.size}")
    if p.size == 0:
        raise ShapeError("metrics need at least one pair")
    return p, t


def rmse(pred, truth) -> float:
    p, t = _pair(pred, truth)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def mae(pred, truth) -> float:
    p, t = _pair(pred, truth)
    return float(np.mean(np.abs(p - t)))


def pearson(pred, truth) -> float:
    p, t = _pair(pred, truth)
    pc, tc = p - p.mean(), t - t.mean()
    denom = math.sqrt(float(pc @ pc) * float(tc @ tc))
    if denom == 0.0:
        raise UndefinedCorrelationError("correlation undefined: a series has zero variance")
    return float(np.clip((pc @ tc) / denom, -1.0, 1.0))


@dataclass
class MetricsRow:
    run: int
    cohort: str
    subject: str
    horizon_min: int
    rmse: float
    mae: float
    pearson_r: float | None
    pooling: str = "final_step"

    @classmethod
    def from_pairs(cls, pred, truth, run: int, cohort: str, subject: str, horizon_min: int, pooling: str = "final_step"):
        try:
            r = pearson(pred, truth)
        except UndefinedCorrelationError:
            r = None
        return cls(run, cohort, subject, horizon_min, rmse(pred, truth), mae(pred, truth), r, pooling)

    @property
    def flagged(self) -> bool:
        return self.pearson_r is None
