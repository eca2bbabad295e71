"""Aggregate stochastic classifier predictions and evaluate their uncertainty."""

__version__ = "0.1.0"

from .aggregate import (
    ENSEMBLE,
    MCD,
    AggregationScheme,
    PredictiveSummary,
    aggregate,
    emcd_scheme,
    load_summaries,
    pass_variance,
    predictive_entropy,
    predictive_mean,
    save_summaries,
)
from .calibration import (
    CalibrationBin,
    CalibrationReport,
    bin_assign,
    calibration_report,
    reliability_diagram_data,
)
from .datasets import SyntheticDataset, generate_dataset, save_dataset
from .errors import (
    AlignmentError,
    FormatError,
    TrainingDivergedError,
    UqevalError,
    ValidationError,
)
from .models import (
    EnsembleSpec,
    Mlp,
    MlpSpec,
    TrainConfig,
    emcd_predict,
    ensemble_predict,
    load_model,
    mc_dropout_predict,
    save_model,
    train_ensemble,
    train_mlp,
)
from .stats import (
    MetricDistribution,
    ModelComparison,
    PairedTestResult,
    accuracy,
    auc_binary,
    compare_models,
    paired_t_test,
    regularized_incomplete_beta,
    student_t_cdf,
    student_t_two_sided_p,
)
from .tensor import (
    LabelSet,
    PredictionTensor,
    align,
    aligned_labels,
    load_labels,
    load_predictions,
    save_labels,
    save_predictions,
)
from .ucm import (
    SeparationReport,
    SweepCurve,
    UncertaintyConfusion,
    build_ucm,
    classify_outcome,
    separation_report,
    threshold_sweep,
    uacc,
    upre,
    usen,
    uspe,
)
