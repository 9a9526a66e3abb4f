import json

import pytest

from glumind.cli import main

TINY_PLAN = {
    "cohort_order": ["Healthy", "Insulin"],
    "subjects_per_cohort": 1,
    "days": 1,
    "T": 12,
    "m": 2,
    "stride": 4,
    "feature_set": ["BG", "HR"],
    "epochs": 2,
    "runs": 1,
    "batch_size": 16,
    "model": {"d_model": 8, "heads": 2, "ff_hidden": 8},
}


@pytest.fixture
def plan_file(tmp_path):
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(TINY_PLAN))
    return path


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as err:
        main(["--help"])
    assert err.value.code == 0


def test_unknown_flag_exits_two():
    with pytest.raises(SystemExit) as err:
        main(["gen-data", "--out", "x", "--bogus"])
    assert err.value.code == 2


def test_gen_data_files_and_idempotence(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["gen-data", "--cohorts", "Healthy", "--subjects", "2", "--days", "1", "--seed", "3", "--out", str(out)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == ["Healthy-000.csv", "Healthy-001.csv", "manifest.json"]
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["seed"] == 3 and len(manifest["subjects"]) == 2


def test_gen_data_zero_days():
    with pytest.raises(SystemExit) as err:
        main(["gen-data", "--days", "0", "--out", "x"])
    assert err.value.code == 2


def test_missing_plan_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["run-sequence", "--plan", str(missing), "--out", str(tmp_path / "o")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_bad_plan_is_usage_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"epochs": 1, "unknown_key": 1}')
    assert main(["run-sequence", "--plan", str(path), "--out", str(tmp_path / "o")]) == 2


def test_run_sequence_outputs_and_lambda_zero(tmp_path, plan_file):
    none_dir, lwf_dir = tmp_path / "none", tmp_path / "lwf0"
    assert main(["run-sequence", "--plan", str(plan_file), "--retention", "none", "--out", str(none_dir)]) == 0
    assert main(["run-sequence", "--plan", str(plan_file), "--retention", "lwf", "--lambda", "0", "--out", str(lwf_dir)]) == 0
    for name in ("metrics.csv", "metrics_all_steps.csv", "forgetting.csv", "metrics.json", "plan.json"):
        assert (none_dir / name).exists()
    assert (none_dir / "checkpoints" / "run0_after_Insulin.glum").exists()
    assert (none_dir / "forgetting.csv").read_bytes() == (lwf_dir / "forgetting.csv").read_bytes()
    assert (none_dir / "metrics.csv").read_bytes() == (lwf_dir / "metrics.csv").read_bytes()


def test_evaluate_reproduces_recorded_row(tmp_path, plan_file, capsys):
    data = tmp_path / "data"
    assert main(["gen-data", "--plan", str(plan_file), "--out", str(data)]) == 0
    out = tmp_path / "run"
    assert main(["run-sequence", "--plan", str(plan_file), "--data", str(data), "--out", str(out)]) == 0
    capsys.readouterr()
    ckpt = out / "checkpoints" / "run0_after_Insulin.glum"
    assert main(["evaluate", "--checkpoint", str(ckpt), "--data", str(data / "Insulin-000.csv"), "--horizon", "10"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 1
    row = json.loads(lines[0])
    recorded = json.loads((out / "metrics.json").read_text())["metrics"]
    want = next(r for r in recorded if r["subject"] == "Insulin-000")
    for key in ("rmse", "mae", "pearson_r"):
        assert round(row[key], 4) == want[key]


def test_generated_and_loaded_data_agree(tmp_path, plan_file):
    data = tmp_path / "data"
    main(["gen-data", "--plan", str(plan_file), "--out", str(data)])
    a, b = tmp_path / "gen", tmp_path / "csv"
    main(["run-sequence", "--plan", str(plan_file), "--out", str(a)])
    main(["run-sequence", "--plan", str(plan_file), "--data", str(data), "--out", str(b)])
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()


def test_evaluate_incompatible(tmp_path, plan_file, capsys):
    out = tmp_path / "run"
    main(["run-sequence", "--plan", str(plan_file), "--out", str(out)])
    ckpt = out / "checkpoints" / "run0_after_Healthy.glum"
    data = tmp_path / "data"
    main(["gen-data", "--plan", str(plan_file), "--out", str(data)])
    capsys.readouterr()
    assert main(["evaluate", "--checkpoint", str(ckpt), "--data", str(data), "--horizon", "60"]) == 5
    assert "horizon" in capsys.readouterr().err
    glucose_only = tmp_path / "Healthy-009.csv"
    lines = (data / "Healthy-000.csv").read_text().splitlines()
    glucose_only.write_text("\n".join([lines[0]] + [l for l in lines[1:] if ",Glucose," in l]) + "\n")
    assert main(["evaluate", "--checkpoint", str(ckpt), "--data", str(glucose_only)]) == 5
    assert "features" in capsys.readouterr().err


def test_evaluate_missing_checkpoint(tmp_path):
    assert main(["evaluate", "--checkpoint", str(tmp_path / "x.glum"), "--data", str(tmp_path)]) == 3


def test_ablate_attention(tmp_path, plan_file):
    assert main(["ablate", "--kind", "attention", "--plan", str(plan_file), "--epochs", "1", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "ablation_attention.csv").read_text().splitlines()
    assert len(lines) == 1 + 4 * 2
