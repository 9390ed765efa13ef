"""Fairness audit and bias-mitigation engine for ward-level tabular regression.

The package covers the full pipeline: ingesting ward-year CSV extracts,
training standard regression models, auditing group disparities over
continuous sensitive features (single-feature, ablation, and
intersectional views), four pre-processing mitigation strategies, and
distribution-shift quantification between year cohorts — all orchestrated
by a reproducible, seed-derived experiment harness.
"""

from .dataset import (
    EncodedDataset,
    RawTable,
    SplitSpec,
    encode,
    join_and_clean,
    load_tables,
    min_max_scale,
    split,
)
from .drift import DriftReport, drift_report, mmd, per_feature_shift, project_2d
from .errors import WardfairError
from .fairness import (
    AblationRecord,
    AuditResult,
    DisparityRecord,
    GroupAssignment,
    ablation_audit,
    assign_groups,
    delta_mae,
    single_feature_audit,
    threshold,
)
from .harness import (
    CellSummary,
    ExperimentConfig,
    RunResult,
    effectiveness_mark,
    run_experiment,
    scatter_regression_plot,
    summarize,
    trend_plot,
)
from .intersectional import (
    IntersectionCell,
    IntersectionReport,
    blind_spot_screen,
    intersect_audit,
)
from .mitigation import (
    AugmentedTrainSet,
    MitigationSpec,
    apply,
    mixup,
    oversample,
    perturb,
    reweight,
)
from .regressors import (
    ModelSpec,
    TrainedModel,
    WeightVector,
    load_model,
    mae,
    predict,
    r2,
    save_model,
    train,
)
from .schema import ColumnSpec, FeatureSchema
from .synth import BlindSpotPlan, CohortShiftPlan, FixturePlan, generate_fixture

__version__ = "0.1.0"

__all__ = [
    "AblationRecord",
    "AuditResult",
    "AugmentedTrainSet",
    "BlindSpotPlan",
    "CellSummary",
    "CohortShiftPlan",
    "ColumnSpec",
    "DisparityRecord",
    "DriftReport",
    "EncodedDataset",
    "ExperimentConfig",
    "FeatureSchema",
    "FixturePlan",
    "GroupAssignment",
    "IntersectionCell",
    "IntersectionReport",
    "MitigationSpec",
    "ModelSpec",
    "RawTable",
    "RunResult",
    "SplitSpec",
    "TrainedModel",
    "WardfairError",
    "WeightVector",
    "ablation_audit",
    "apply",
    "assign_groups",
    "blind_spot_screen",
    "delta_mae",
    "drift_report",
    "effectiveness_mark",
    "encode",
    "generate_fixture",
    "intersect_audit",
    "join_and_clean",
    "load_model",
    "load_tables",
    "mae",
    "min_max_scale",
    "mixup",
    "mmd",
    "oversample",
    "per_feature_shift",
    "perturb",
    "predict",
    "project_2d",
    "r2",
    "reweight",
    "run_experiment",
    "save_model",
    "scatter_regression_plot",
    "single_feature_audit",
    "split",
    "summarize",
    "threshold",
    "train",
    "trend_plot",
]
