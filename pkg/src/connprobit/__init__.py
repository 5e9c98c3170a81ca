"""Heteroscedastic probit separating favors from information in promotions."""

from .counterfactual import average_effects, decompose, marginal_effect
from .data import Candidate, DataError, Dataset, Exam, Schema, load_dataset, save_dataset, \
    standardize_within_exam
from .diagnostics import balance_test, select_baseline_variance
from .estimator import BaselineVarianceSelector, ConnectionProbit, WithinExamScaler
from .inference import attach_covariance, clustered_covariance, lr_test, wald_test
from .likelihood import log_likelihood, predict_prob
from .optimize import FitOptions, FitResult, fit
from .simulate import DgpConfig, simulate
from .spec import BaselineVarSpec, BiasSpec, InfoSpec, ModelSpec, ParamVector, ThresholdSpec, \
    equivalent_reparam

__version__ = "0.1.0"

__all__ = [
    "BaselineVarSpec", "BaselineVarianceSelector", "BiasSpec", "Candidate", "ConnectionProbit",
    "DataError", "Dataset", "DgpConfig", "Exam", "FitOptions", "FitResult", "InfoSpec",
    "ModelSpec", "ParamVector", "Schema", "ThresholdSpec", "WithinExamScaler",
    "attach_covariance", "average_effects", "balance_test", "clustered_covariance",
    "decompose", "equivalent_reparam", "fit", "load_dataset", "log_likelihood", "lr_test",
    "marginal_effect", "predict_prob", "save_dataset", "select_baseline_variance", "simulate",
    "standardize_within_exam", "wald_test",
]
