"""scikit-learn style estimators wrapping the fitting pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import counterfactual
from .data import standardize_within_exam
from .diagnostics import select_baseline_variance
from .inference import clustered_covariance, z_table
from .likelihood import evaluate
from .optimize import FitOptions, fit
from .spec import (BASELINE_VARIANTS, BIAS_VARIANTS, INFO_VARIANTS, THRESHOLD_VARIANTS,
                   BaselineVarSpec, BiasSpec, InfoSpec, ModelSpec, ThresholdSpec)
from .stats import norm_cdf
from .validation import check_dataset, check_in


class ConnectionProbit(ClassifierMixin, BaseEstimator):
    """Heteroscedastic probit separating favors from information.

    Promotion probability is ``Phi[(x beta + B(n_S, n_W, x) - a_e) /
    (sigma_v(x) sigma(n_S, n_W, x))]``. ``bias`` selects ``B``, ``info``
    selects ``log sigma``, ``baseline`` selects ``log sigma_v`` and
    ``threshold`` the exam thresholds ``a_e``.

    ``fit`` takes a :class:`~connprobit.data.Dataset` (or a DataFrame plus
    ``schema``); ``y`` may override its outcome.

    Attributes set by ``fit``: ``spec_``, ``result_``, ``params_``,
    ``coef_``, ``covariance_``, ``loglik_``, ``n_iter_``, ``converged_``.
    """

    def __init__(self, bias="constant_connected", info="constant_connected",
                 baseline="homoscedastic", baseline_columns=(), interacted=(),
                 threshold="grouped_effects", group_covariates=None, include_expected=True,
                 cov_type="cluster", max_iter=500, grad_tol=1e-6, step_tol=1e-9, box=10.0,
                 staged=True, schema=None):
        self.bias = bias
        self.info = info
        self.baseline = baseline
        self.baseline_columns = baseline_columns
        self.interacted = interacted
        self.threshold = threshold
        self.group_covariates = group_covariates
        self.include_expected = include_expected
        self.cov_type = cov_type
        self.max_iter = max_iter
        self.grad_tol = grad_tol
        self.step_tol = step_tol
        self.box = box
        self.staged = staged
        self.schema = schema

    def _spec(self):
        check_in(self.bias, BIAS_VARIANTS, "bias")
        check_in(self.info, INFO_VARIANTS, "info")
        check_in(self.baseline, BASELINE_VARIANTS, "baseline")
        check_in(self.threshold, THRESHOLD_VARIANTS, "threshold")
        check_in(self.cov_type, ("cluster", "robust", "nonrobust", None), "cov_type")
        return ModelSpec(
            bias=BiasSpec(self.bias, tuple(self.interacted)),
            info=InfoSpec(self.info, tuple(self.interacted)),
            baseline=BaselineVarSpec(self.baseline, tuple(self.baseline_columns)),
            threshold=ThresholdSpec(self.threshold, self.group_covariates),
            include_expected=self.include_expected,
        )

    def _options(self):
        return FitOptions(max_iter=self.max_iter, grad_tol=self.grad_tol,
                          step_tol=self.step_tol, box=self.box,
                          stages=("homoscedastic", "full") if self.staged else ("full",))

    def fit(self, X, y=None, init=None):
        ds = check_dataset(X, y, self.schema)
        spec = self._spec()
        res = fit(spec, ds, init=init, options=self._options())
        if self.cov_type is not None and res.converged:
            res.covariance = clustered_covariance(res, self.cov_type)
        self.spec_ = spec
        self.result_ = res
        self.params_ = res.params_hat
        self.coef_ = res.params_hat.values
        self.feature_names_in_ = np.array(res.params_hat.layout.block_names("beta"))
        self.covariance_ = res.covariance
        self.loglik_ = res.loglik
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        self.classes_ = np.array([0, 1])
        return self

    def _design(self, X):
        check_is_fitted(self, "params_")
        ds = check_dataset(X, schema=self.schema)
        return ds, self.spec_.compile(ds, self.params_.layout)

    def decision_function(self, X):
        """Standardized index ``mean / (sigma_v sigma)``; promotion iff > 0 at p = 0.5."""
        _, design = self._design(X)
        mean, ls = design.index(self.coef_)
        return mean * np.exp(-ls)

    def predict_proba(self, X):
        p = norm_cdf(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.decision_function(X) >= 0).astype(int)

    def loglik(self, X):
        _, design = self._design(X)
        return evaluate(design, self.coef_).loglik

    def decompose(self, X, change="connect"):
        ds, _ = self._design(X)
        return counterfactual.decompose(self.spec_, self.params_, ds, change)

    def marginal_effects(self, X, change="connect", subsample="unconnected_linked"):
        ds, _ = self._design(X)
        return counterfactual.average_effects(self.spec_, self.params_, ds, subsample, change)

    def summary(self):
        check_is_fitted(self, "result_")
        from .report import format_fit
        return format_fit(self.result_)

    def coef_table(self):
        check_is_fitted(self, "result_")
        return z_table(self.result_)


class WithinExamScaler(TransformerMixin, BaseEstimator):
    """Center (and scale) observables within each exam. Stateless."""

    def __init__(self, columns=None, scale=True):
        self.columns = columns
        self.scale = scale

    def fit(self, X, y=None):
        ds = check_dataset(X)
        self.columns_ = tuple(ds.observable_names if self.columns is None else self.columns)
        return self

    def transform(self, X):
        check_is_fitted(self, "columns_")
        return standardize_within_exam(check_dataset(X), self.columns_, self.scale)


class BaselineVarianceSelector(BaseEstimator):
    """Choose baseline log-variance regressors on unconnected candidates.

    After ``fit``: ``selected_`` (column names), ``baseline_spec_``, ``z_``
    (clustered z statistics of the full fit) and ``lr_`` (restricted vs full).
    """

    def __init__(self, significance_threshold=1.96, always_keep=("e_strong", "e_weak"),
                 threshold="grouped_effects", max_iter=500):
        self.significance_threshold = significance_threshold
        self.always_keep = always_keep
        self.threshold = threshold
        self.max_iter = max_iter

    def fit(self, X, y=None):
        ds = check_dataset(X, y)
        sel = select_baseline_variance(
            ds, self.significance_threshold, tuple(self.always_keep),
            ThresholdSpec(self.threshold), FitOptions(max_iter=self.max_iter))
        self.selection_ = sel
        self.selected_ = sel.selected
        self.baseline_spec_ = sel.spec
        self.z_ = sel.z
        self.lr_ = sel.lr
        return self
