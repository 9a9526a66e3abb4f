"""Per-subject fine-tuning and evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from glumind.errors import TrainingAbort
from glumind.harness.metrics import MetricsRow
from glumind.harness.plan import ExperimentPlan
from glumind.model import GluMindModel
from glumind.retention import (
    EwcState,
    ReservoirBuffer,
    RetentionKind,
    RetentionMethod,
    er_mix_batch,
    ewc_penalty,
    lwf_total_loss,
)
from glumind.signals.preprocess import invert_z
from glumind.signals.types import GLUCOSE_PERIOD_MIN, WindowSample
from glumind.signals.windows import Batch, PreparedSubject, stack
from glumind.tensor import AdamW, Tape, Tensor, add, backward, mse

log = logging.getLogger(__name__)


def chronological_batches(windows: Sequence[WindowSample], batch_size: int) -> list[Batch]:
    return [stack(windows[i : i + batch_size]) for i in range(0, len(windows), batch_size)]


@dataclass
class RetentionContext:
    """Mutable retention state threaded through one sequence run."""

    method: RetentionMethod
    rng: np.random.Generator
    snapshot: GluMindModel | None = None
    ewc: EwcState = field(default_factory=EwcState)
    buffer: ReservoirBuffer | None = None

    @classmethod
    def fresh(cls, method: RetentionMethod, seed: int) -> "RetentionContext":
        rng = np.random.default_rng([seed, 0x5EED])
        buf = ReservoirBuffer(method.buffer_cap, rng) if method.kind is RetentionKind.er else None
        return cls(method, rng, buffer=buf)

    def loss(self, model: GluMindModel, batch: Batch):
        kind = self.method.kind
        if kind is RetentionKind.er and self.buffer is not None:
            batch = er_mix_batch(batch, self.buffer, self.method.replay_ratio, self.rng)
        if kind is RetentionKind.lwf and self.snapshot is not None:
            return lwf_total_loss(model, self.snapshot, batch, self.method.lam)
        fit = mse(model.forward_batch(batch), Tensor(batch.target))
        if kind is RetentionKind.ewc and self.ewc.ready:
            return add(fit, ewc_penalty(model.params, self.ewc.anchor, self.ewc.fisher, self.method.lambda_ewc))
        return fit

    def end_cohort(self, model: GluMindModel, train_windows: Sequence[WindowSample], batch_size: int) -> None:
        """Cohort-boundary bookkeeping for whichever method is active."""
        kind = self.method.kind
        if kind is RetentionKind.lwf:
            self.snapshot = model.snapshot()
        elif kind is RetentionKind.ewc:
            self.ewc.consolidate(model, chronological_batches(train_windows, batch_size), self.method.fisher_samples)
        elif kind is RetentionKind.er:
            self.buffer.extend(train_windows)


@dataclass
class SubjectResult:
    subject_id: str
    epoch_losses: list[float]
    rows: list[MetricsRow]


@dataclass
class Evaluation:
    pred_mgdl: np.ndarray  # (N, m)
    truth_mgdl: np.ndarray

    def row(self, run: int, cohort: str, subject: str, pooling: str = "final_step") -> MetricsRow:
        m = self.pred_mgdl.shape[1]
        horizon = int(m * GLUCOSE_PERIOD_MIN)
        if pooling == "final_step":
            return MetricsRow.from_pairs(self.pred_mgdl[:, -1], self.truth_mgdl[:, -1], run, cohort, subject, horizon)
        return MetricsRow.from_pairs(self.pred_mgdl, self.truth_mgdl, run, cohort, subject, horizon, "all_steps")


def evaluate(model: GluMindModel, subject: PreparedSubject, batch_size: int = 256) -> Evaluation:
    """Predict the held-out split and map predictions back to mg/dL."""
    mean, sd = subject.glucose_stats
    preds, truth = [], []
    for batch in chronological_batches(subject.test, batch_size):
        preds.append(model.predict(batch))
        truth.append(batch.target)
    return Evaluation(invert_z(np.concatenate(preds), mean, sd), invert_z(np.concatenate(truth), mean, sd))


def pooled(evals: Sequence[Evaluation]) -> Evaluation:
    return Evaluation(np.concatenate([e.pred_mgdl for e in evals]), np.concatenate([e.truth_mgdl for e in evals]))


def train_subject(
    model: GluMindModel,
    subject: PreparedSubject,
    plan: ExperimentPlan,
    ctx: RetentionContext,
    run: int = 0,
) -> SubjectResult:
    """``plan.epochs`` chronological passes over the train split, then test metrics.

    A fresh AdamW state is used per subject.
    """
    opt = AdamW(model.params, lr=plan.lr, weight_decay=plan.weight_decay)
    batches = chronological_batches(subject.train, plan.batch_size)
    losses = []
    for epoch in range(plan.epochs):
        total = 0.0
        for batch in batches:
            try:
                with Tape() as tape:
                    loss = ctx.loss(model, batch)
                grads = backward(loss, tape, model.params)
                opt.step(grads)
            except FloatingPointError as exc:
                raise TrainingAbort(f"{subject.subject_id}: {exc} at epoch {epoch}") from exc
            total += loss.item() * len(batch)
        losses.append(total / len(subject.train))
    ev = evaluate(model, subject)
    rows = [ev.row(run, subject.cohort, subject.subject_id), ev.row(run, subject.cohort, subject.subject_id, "all_steps")]
    return SubjectResult(subject.subject_id, losses, rows)
