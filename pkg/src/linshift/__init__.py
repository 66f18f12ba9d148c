"""Linearly shifted posterior drift: transfer a source classifier to a target
domain by refitting a low-dimensional shift on the logit scale."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, DomainError, RankDeficientError, ConvergenceWarning
from .glm_core import LinkKind, sigmoid, logit, entropy_loss, inverse_link
from .features import FeatureMap, build_row, build_design
from .source_fit import (
    Dataset,
    Penalty,
    FitReport,
    CoefficientModel,
    KernelModel,
    ExternalModel,
    balanced_weights,
    fit_logistic,
    fit_kernel,
    predict_proba,
)
from .transfer import (
    TransferModel,
    JointModel,
    fit_transfer,
    predict_target_proba,
    classify,
    fit_joint,
    fit_transfer_gaussian,
)
from .metrics import MetricsReport, confusion, auc, evaluate

__all__ = [
    "ConfigError", "DataError", "DomainError", "RankDeficientError", "ConvergenceWarning",
    "LinkKind", "sigmoid", "logit", "entropy_loss", "inverse_link",
    "FeatureMap", "build_row", "build_design",
    "Dataset", "Penalty", "FitReport", "CoefficientModel", "KernelModel", "ExternalModel",
    "balanced_weights", "fit_logistic", "fit_kernel", "predict_proba",
    "TransferModel", "JointModel", "fit_transfer", "predict_target_proba", "classify",
    "fit_joint", "fit_transfer_gaussian",
    "MetricsReport", "confusion", "auc", "evaluate",
]
