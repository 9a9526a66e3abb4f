import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from glumind.errors import ConfigurationError, ShapeError, UndefinedCorrelationError
from glumind.harness import (
    ExperimentPlan,
    MetricsRow,
    bundled_plan,
    emit_metrics,
    fmt,
    grid,
    load_plan,
    mae,
    pearson,
    plan_from_dict,
    prepare_all,
    read_table,
    rmse,
    run_sequence,
    train_subject,
)
from glumind.harness.ablation import summarize
from glumind.harness.training import RetentionContext
from glumind.model import GluMindModel
from glumind.retention import RetentionMethod
from glumind.signals import Modality, SubjectRecord, prepare_subject

TINY = dict(
    cohort_order=["Healthy", "Insulin"],
    subjects_per_cohort=2,
    days=1,
    T=12,
    m=2,
    stride=4,
    feature_set=["BG", "HR"],
    epochs=2,
    runs=1,
    batch_size=16,
    model={"d_model": 8, "heads": 2, "ff_hidden": 8},
)


def tiny(**kw):
    return plan_from_dict({**TINY, **kw})


@pytest.fixture(scope="module")
def tiny_data():
    return prepare_all(tiny())


# ---------------------------------------------------------------- metrics


def test_metric_examples():
    assert rmse([1, 2], [1, 2]) == 0.0
    assert rmse([4, 5, 6], [1, 2, 3]) == 3.0
    assert rmse([1, 2], [3, 2]) == pytest.approx(np.sqrt(2), abs=1e-15)
    assert mae([1, 2], [3, 2]) == 1.0
    assert pearson([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0, abs=1e-15)
    assert pearson([-1, 0, 1], [1, 0, -1]) == pytest.approx(-1.0, abs=1e-15)
    assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(oracles.pearson([1, 2, 3], [1, 2, 4]), abs=1e-12)
    assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(0.9819805060619659, abs=1e-12)


def test_metric_errors():
    with pytest.raises(ShapeError):
        rmse([1, 2], [1])
    with pytest.raises(UndefinedCorrelationError):
        pearson([1, 1, 1], [1, 2, 3])
    row = MetricsRow.from_pairs([2, 2], [1, 3], 0, "Oral", "s", 30)
    assert row.pearson_r is None and row.flagged


@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=40))
def test_mae_below_rmse(pairs):
    p, t = zip(*pairs)
    assert 0 <= mae(p, t) <= rmse(p, t) * (1 + 1e-12) + 1e-12


# ---------------------------------------------------------------- plans


def test_plan_defaults():
    plan = ExperimentPlan()
    assert plan.cohort_order == ["Healthy", "PreT2DM", "Oral", "Insulin"]
    assert (plan.epochs, plan.lr, plan.runs, plan.batch_size) == (500, 0.001, 5, 32)


@pytest.mark.parametrize(
    "doc",
    [
        {"colour": "red"},
        {"epochs": "10"},
        {"runs": 0},
        {"feature_set": ["W"]},
        {"feature_set": ["BG", "Sleep"]},
        {"cohort_order": ["Martian"]},
        {"model": {"depth": 3}},
        {"retention": {"kind": "lwf", "alpha": 2}},
        {"cohort_specs": {"Oral": {"glucose_sd": -1}}},
    ],
)
def test_plan_rejects(doc):
    with pytest.raises(ConfigurationError):
        plan_from_dict(doc)


@pytest.mark.parametrize("name", ["demo", "benchmark"])
def test_bundled_plans_load(name):
    plan = load_plan(bundled_plan(name))
    assert plan.epochs <= 50 and len(plan.cohort_order) == 2
    assert plan_from_dict(json.loads(plan.to_json())) == plan


# ---------------------------------------------------------------- training


def test_loss_decreases_over_ten_epochs(tiny_data):
    plan = tiny(epochs=10)
    subj = tiny_data["Healthy"][0]
    res = train_subject(GluMindModel(plan.model_config()), subj, plan, RetentionContext.fresh(RetentionMethod(), 0))
    assert res.epoch_losses[9] < res.epoch_losses[0]


def test_zero_epochs_leaves_model(tiny_data):
    plan = tiny(epochs=0)
    model = GluMindModel(plan.model_config())
    before = model.params.copy()
    res = train_subject(model, tiny_data["Healthy"][0], plan, RetentionContext.fresh(RetentionMethod(), 0))
    assert model.params.bitwise_equal(before)
    assert res.epoch_losses == []
    assert res.rows[0].rmse > 0


def test_train_subject_deterministic(tiny_data):
    plan = tiny()
    rows = []
    for _ in range(2):
        model = GluMindModel(plan.model_config())
        rows.append(train_subject(model, tiny_data["Healthy"][0], plan, RetentionContext.fresh(RetentionMethod(), 0)).rows)
    assert rows[0] == rows[1]


def test_rmse_reported_in_glucose_units(tiny_data):
    plan = tiny(epochs=1)
    from glumind.harness.sequence import load_records

    rec = load_records(plan, "Healthy")[0]
    doubled = SubjectRecord(
        rec.subject_id,
        rec.cohort,
        {**rec.series, Modality.Glucose: replace(rec.glucose, values=rec.glucose.values * 2)},
    )
    results = []
    for r in (rec, doubled):
        subj = prepare_subject(r, plan.T, plan.m, plan.stride, plan.feature_set)
        model = GluMindModel(plan.model_config())
        results.append(train_subject(model, subj, plan, RetentionContext.fresh(RetentionMethod(), 0)).rows[0])
    assert results[1].rmse == pytest.approx(2 * results[0].rmse, rel=1e-9)
    assert results[1].pearson_r == pytest.approx(results[0].pearson_r, abs=1e-9)


# ---------------------------------------------------------------- sequence


def test_single_cohort_has_no_forgetting(tiny_data):
    plan = tiny(cohort_order=["Healthy"])
    res = run_sequence(plan, 0, {"Healthy": tiny_data["Healthy"]})
    (row,) = res.report.rows
    assert (row.fr, row.af, row.bwt) == (1.0, 0.0, 0.0)


def test_identical_cohorts_show_little_forgetting():
    # needs enough data and epochs to sit near a steady state; the tiny
    # default overfits and a second pass then moves test RMSE by 20%
    base = tiny(days=4, epochs=40)
    same = prepare_all(base)["Healthy"]
    plan = base.with_(cohort_order=["Healthy", "Oral"])
    res = run_sequence(plan, 0, {"Healthy": same, "Oral": same})
    assert abs(res.report.rows[0].fr - 1.0) <= 0.05


def test_sequence_deterministic(tiny_data):
    a = run_sequence(tiny(retention={"kind": "er"}), 0, tiny_data)
    b = run_sequence(tiny(retention={"kind": "er"}), 0, tiny_data)
    assert a.rows == b.rows
    assert a.report.to_dict() == b.report.to_dict()
    assert a.model.params.bitwise_equal(b.model.params)


def test_lwf_zero_lambda_matches_none(tiny_data):
    a = run_sequence(tiny(), 0, tiny_data)
    b = run_sequence(tiny(retention={"kind": "lwf", "lam": 0.0}), 0, tiny_data)
    assert a.model.params.bitwise_equal(b.model.params)
    assert [r.fr for r in a.report.rows] == [r.fr for r in b.report.rows]


@pytest.mark.parametrize("kind", ["none", "lwf", "ewc", "er"])
def test_every_method_runs(kind, tiny_data):
    res = run_sequence(tiny(retention={"kind": kind}), 0, tiny_data)
    assert len(res.report.rows) == 2
    assert res.report.rows[-1].fr == 1.0


def test_test_windows_never_trained(tiny_data, monkeypatch):
    seen = []
    from glumind.harness import training

    original = training.RetentionContext.loss

    def spy(self, model, batch):
        seen.append(set(zip(batch.subjects, batch.starts.tolist())))
        return original(self, model, batch)

    monkeypatch.setattr(training.RetentionContext, "loss", spy)
    run_sequence(tiny(retention={"kind": "er"}), 0, tiny_data)
    trained = set().union(*seen)
    held_out = {(s.subject_id, w.start) for c in tiny_data.values() for s in c for w in s.test}
    assert trained and trained.isdisjoint(held_out)


def test_checkpoints_written(tmp_path, tiny_data):
    res = run_sequence(tiny(), 0, tiny_data, checkpoint_dir=tmp_path)
    assert [p.name for p in res.checkpoints] == ["run0_after_Healthy.glum", "run0_after_Insulin.glum"]
    assert all(p.exists() and p.with_suffix(".json").exists() for p in res.checkpoints)


# ---------------------------------------------------------------- ablation


def test_grid_sizes():
    base = tiny()
    assert len(grid("features", base)) == 7
    assert len(grid("attention", base)) == 4
    horizons = grid("horizons", base)
    assert [c.plan.m for c in horizons] == [1, 6, 12]
    assert [c.label for c in horizons] == ["PH5", "PH30", "PH60"]
    assert [c.plan.T for c in grid("histories", base)] == base.histories
    assert [c.label for c in grid("retention", base)] == ["None", "LwF", "EWC", "ER"]


def test_bg_only_cell_has_no_cross_branches():
    cell = grid("features", tiny())[0]
    assert cell.label == "BG"
    assert GluMindModel(cell.plan.model_config()).n_cross_branches == 0


def test_summarize_mean_and_sd(tiny_data):
    results = [run_sequence(tiny(), run, tiny_data) for run in range(2)]
    rows = summarize("attention", "Full", results)
    assert [r.cohort for r in rows] == ["Healthy", "Insulin"]
    per_run = [np.mean([r.rmse for r in res.rows if r.cohort == "Healthy" and r.pooling == "final_step"]) for res in results]
    assert rows[0].rmse_mean == pytest.approx(np.mean(per_run))
    assert rows[0].rmse_sd == pytest.approx(np.std(per_run, ddof=1))
    assert rows[0].runs == 2 and rows[0].horizon_min == 10


# ---------------------------------------------------------------- emit


def test_four_decimal_rendering():
    assert fmt(0.92488) == "0.9249"
    assert fmt(-0.00001) == "0.0000"
    assert fmt(None) == "" and fmt(float("nan")) == ""
    assert fmt(3) == "3"


def test_empty_rows_header_only(tmp_path):
    emit_metrics([], [], tmp_path)
    assert (tmp_path / "metrics.csv").read_text() == "run,cohort,subject,horizon_min,rmse,mae,pearson_r\n"


def test_emit_round_trip(tmp_path, tiny_data):
    plan = tiny()
    res = run_sequence(plan, 0, tiny_data)
    emit_metrics(res.rows, [res.report], tmp_path, plan)
    table = read_table(tmp_path / "metrics.csv")
    final = [r for r in res.rows if r.pooling == "final_step"]
    assert len(table) == len(final)
    for got, want in zip(table, final):
        assert got["subject"] == want.subject
        assert float(got["rmse"]) == pytest.approx(want.rmse, abs=5e-5)
        assert float(got["pearson_r"]) == pytest.approx(want.pearson_r, abs=5e-5)
    forgetting = read_table(tmp_path / "forgetting.csv")
    assert list(forgetting[0]) == ["cohort", "rmse_initial", "rmse_final", "fr", "af", "bwt"]
    doc = json.loads((tmp_path / "metrics.json").read_text())
    assert doc["plan"] == json.loads((tmp_path / "plan.json").read_text())
    assert doc["metrics"][0]["rmse"] == float(table[0]["rmse"])
