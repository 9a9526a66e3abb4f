from glumind.harness.ablation import AblationKind, AblationRow, grid, run_ablation
from glumind.harness.emit import emit_ablation, emit_metrics, fmt, read_table
from glumind.harness.metrics import MetricsRow, mae, pearson, rmse
from glumind.harness.plan import ExperimentPlan, bundled_plan, load_plan, plan_from_dict
from glumind.harness.sequence import SequenceResult, prepare_all, prepare_cohort, run_sequence
from glumind.harness.training import RetentionContext, evaluate, train_subject

__all__ = [
    "AblationKind",
    "AblationRow",
    "ExperimentPlan",
    "MetricsRow",
    "RetentionContext",
    "SequenceResult",
    "bundled_plan",
    "emit_ablation",
    "emit_metrics",
    "evaluate",
    "fmt",
    "grid",
    "load_plan",
    "mae",
    "pearson",
    "plan_from_dict",
    "prepare_all",
    "prepare_cohort",
    "read_table",
    "rmse",
    "run_ablation",
    "run_sequence",
    "train_subject",
]
