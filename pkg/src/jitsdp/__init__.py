"""Concept-preserving incremental defect prediction workbench."""

from .balance import (
    BalancedSet,
    SmoteConfig,
    SmotePcConfig,
    balance_report,
    smote_balance,
    smote_pc,
)
from .config import (
    HarnessConfig,
    InputConfig,
    PreprocessConfig,
    RunConfig,
    config_digest,
    load_config,
)
from .curve import CurveConfig, CurveFitReport, PrincipalCurve, curve_cosine_similarity, fit_curve
from .data import (
    CSV_COLUMNS,
    DEFAULT_FEATURES,
    WINDOW_90_DAYS,
    ChangeMetrics,
    Changeset,
    Dataset,
    load_csv,
    log_transform,
    partition_equal,
    partition_window,
    remove_collinear,
    save_csv,
)
from .errors import (
    CannotInterpolateError,
    ConfigError,
    DataError,
    DegenerateCurveError,
    DegenerateTableError,
    EmptyDatasetError,
    InsufficientDataError,
    JitsdpError,
    NumericFailureError,
    PlanError,
    SchemaError,
    UndefinedMetricError,
    UnsupportedDatasetError,
)
from .experiments import (
    ComparisonRow,
    EvalReport,
    ExperimentPlan,
    Rq1Report,
    Rq4Result,
    run_rq1,
    run_rq4,
    verdict_of,
    write_comparisons_csv,
    write_reports_jsonl,
)
from .metrics import ClassificationReport, auc_roc, classification_metrics, random_baseline
from .nn import (
    DeepICPModel,
    ForecastModel,
    LogisticModel,
    TrainConfig,
    WindowedBatch,
    incremental_update,
    load_model,
    predict,
    save_model,
    sliding_windows,
    train_deepicp,
    train_forecaster,
    train_logistic,
)
from .rng import named_rng
from .stats import (
    ContingencyTable2x2,
    DriftSeries,
    TripletDistribution,
    chi_square_independence,
    drift_series,
    drift_to_csv,
    intersecting_fraction,
    pair_table,
    triplet_distribution,
)
from .synth import (
    ManifoldConfig,
    drifting_dataset,
    joint_signal_dataset,
    manifold_dataset,
    manifold_imbalance,
    markov_dataset,
)

__version__ = "0.1.0"
