from glumind.signals.generator import generate_cohort, generate_subject, subject_seed
from glumind.signals.io import load_csv, write_csv
from glumind.signals.preprocess import (
    apply_z,
    clean_subject,
    interpolate_gaps,
    invert_z,
    normalize_z,
    resample_to_grid,
    trim_to_common_span,
)
from glumind.signals.types import (
    COHORT_PRESETS,
    DEFAULT_FEATURE_SET,
    FEATURE_SET_GRID,
    Cohort,
    CohortSpec,
    Modality,
    SignalSeries,
    SubjectRecord,
    WindowSample,
    aux_modalities,
    feature_label,
)
from glumind.signals.windows import (
    Batch,
    PreparedSubject,
    concat_batches,
    make_windows,
    prepare_subject,
    split_train_test,
    stack,
)

__all__ = [
    "Batch",
    "COHORT_PRESETS",
    "Cohort",
    "CohortSpec",
    "DEFAULT_FEATURE_SET",
    "FEATURE_SET_GRID",
    "Modality",
    "PreparedSubject",
    "SignalSeries",
    "SubjectRecord",
    "WindowSample",
    "apply_z",
    "aux_modalities",
    "clean_subject",
    "concat_batches",
    "feature_label",
    "generate_cohort",
    "generate_subject",
    "interpolate_gaps",
    "invert_z",
    "load_csv",
    "make_windows",
    "normalize_z",
    "prepare_subject",
    "resample_to_grid",
    "split_train_test",
    "stack",
    "subject_seed",
    "trim_to_common_span",
    "write_csv",
]
