"""Robust disease progression modeling from short longitudinal cohorts.

Each subject's visits are placed on a common timeline by an affine map of
age, biomarker trajectories on that timeline are sigmoids fitted under
bounded-influence losses, and bootstrapped ensembles provide ordering,
staging and uncertainty summaries.
"""

from .cohort import (
    BiomarkerSpec,
    Cohort,
    ConstraintPolicy,
    Diagnosis,
    Direction,
    MeasurementRecord,
    Visit,
    load_biomarker_specs,
    parse_cohort_csv,
    write_biomarker_specs,
    write_cohort_csv,
)
from .curves import (
    CurveParams,
    LogisticKind,
    dps_gradient,
    evaluate,
    inflection_point,
    param_gradient,
)
from .errors import (
    DomainError,
    DpsFitError,
    EnsembleError,
    FitError,
    IncompatibleModelError,
    InitializationError,
    InsufficientDataError,
    MappingError,
    MetricError,
    ParseError,
    PreprocessingError,
    SchemaError,
    SolverError,
    StagingError,
    StandardizationError,
)
from .fitter import FitConfig, FitTrace, fit
from .metrics import bic, mae, multiclass_auc, nmae, wilcoxon_signed_rank
from .progression import (
    FittedModel,
    Standardization,
    SubjectParams,
    compute_dps,
    estimate_subject,
    load_model,
    predict_biomarkers,
    save_model,
    standardize,
)
from .resampling import (
    BootstrapEnsemble,
    aggregate_curves,
    bootstrap_sample,
    ordering_matrix,
    partition_train_test,
    run_bootstraps,
)
from .robust_loss import LossKind, psi, rho, weight
from .staging import (
    StagedVisit,
    StagingClassifier,
    TimeMapping,
    collect_class_scores,
    ensemble_posterior,
    fit_classifier,
    fit_time_mapping,
    posterior,
    remap_curve_to_time,
)
from .synth import SynthBiomarker, SynthSpec, generate, inject_outliers

__version__ = "0.1.0"

__all__ = [
    "BiomarkerSpec",
    "BootstrapEnsemble",
    "Cohort",
    "ConstraintPolicy",
    "CurveParams",
    "Diagnosis",
    "Direction",
    "DomainError",
    "DpsFitError",
    "EnsembleError",
    "FitConfig",
    "FitError",
    "FitTrace",
    "FittedModel",
    "IncompatibleModelError",
    "InitializationError",
    "InsufficientDataError",
    "LogisticKind",
    "LossKind",
    "MappingError",
    "MeasurementRecord",
    "MetricError",
    "ParseError",
    "PreprocessingError",
    "SchemaError",
    "SolverError",
    "StagedVisit",
    "StagingClassifier",
    "StagingError",
    "Standardization",
    "StandardizationError",
    "SubjectParams",
    "SynthBiomarker",
    "SynthSpec",
    "TimeMapping",
    "Visit",
    "aggregate_curves",
    "bic",
    "bootstrap_sample",
    "collect_class_scores",
    "compute_dps",
    "dps_gradient",
    "ensemble_posterior",
    "estimate_subject",
    "evaluate",
    "fit",
    "fit_classifier",
    "fit_time_mapping",
    "generate",
    "inflection_point",
    "inject_outliers",
    "load_biomarker_specs",
    "load_model",
    "mae",
    "multiclass_auc",
    "nmae",
    "ordering_matrix",
    "param_gradient",
    "parse_cohort_csv",
    "partition_train_test",
    "posterior",
    "predict_biomarkers",
    "psi",
    "remap_curve_to_time",
    "rho",
    "run_bootstraps",
    "save_model",
    "standardize",
    "weight",
    "wilcoxon_signed_rank",
    "write_biomarker_specs",
    "write_cohort_csv",
]
