"""Randomization checks and selection of the baseline variance regressors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import Dataset
from .inference import LrTestResult, attach_covariance, lr_test, sandwich, stars, z_table
from .optimize import FitOptions, FitResult, RankDeficiencyError, _dependent_columns, fit
from .spec import BaselineVarSpec, BiasSpec, InfoSpec, ModelSpec, ThresholdSpec


@dataclass(frozen=True)
class OlsResult:
    names: tuple
    coef: np.ndarray
    se: np.ndarray
    n: int
    n_clusters: int

    @property
    def z(self):
        return self.coef / self.se

    @property
    def p(self):
        return 2.0 * stats.norm.sf(np.abs(self.z))


def ols_clustered(y, X, names, clusters=None):
    """OLS with cluster-robust standard errors (``G / (G - 1)`` correction).

    ``clusters=None`` makes every row its own cluster, which gives the
    heteroskedasticity-robust covariance with an ``n / (n - 1)`` factor.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    bad = _dependent_columns(X, list(names))
    if bad:
        raise RankDeficiencyError("regressors are collinear", bad)
    XtX_inv = np.linalg.inv(X.T @ X)
    coef = XtX_inv @ (X.T @ y)
    resid = y - X @ coef
    scores = X * resid[:, None]
    if clusters is None:
        G = len(y)
        sums = scores
    else:
        codes, clusters = np.unique(clusters, return_inverse=True)
        G = len(codes)
        sums = np.zeros((G, X.shape[1]))
        np.add.at(sums, clusters, scores)
    if G < 2:
        raise ValueError("need at least two clusters")
    V = sandwich(XtX_inv, sums, G / (G - 1))
    return OlsResult(tuple(names), coef, np.sqrt(np.diag(V)), len(y), G)


@dataclass
class BalanceReport:
    """Coefficients on realized ties, one regression per observable and panel.

    ``panels[panel][observable][row]`` is ``(coef, se, p)`` with ``panel`` in
    ``("without", "with")`` (controls for expected ties) and ``row`` in
    ``("Strong", "Weak")``.
    """

    observables: tuple
    panels: dict
    n: int

    def cells(self, panel="with"):
        return [(obs, row, *self.panels[panel][obs][row])
                for obs in self.observables for row in ("Strong", "Weak")]

    def share_significant(self, panel="with", level=0.05):
        p = np.array([c[4] for c in self.cells(panel)])
        return float(np.mean(p < level))


def balance_test(ds: Dataset, observables=None) -> BalanceReport:
    """Regress each observable on realized strong/weak ties, without and with
    the expected numbers of ties as controls. Standard errors are clustered
    by exam."""
    observables = tuple(ds.observable_names if observables is None else observables)
    ones = np.ones(len(ds))
    base = np.column_stack([ones, ds.n_strong, ds.n_weak])
    ctrl = np.column_stack([base, ds.e_strong, ds.e_weak])
    panels = {"without": {}, "with": {}}
    for obs in observables:
        yv = ds.column(obs)
        for panel, X, names in (
                ("without", base, ("const", "n_strong", "n_weak")),
                ("with", ctrl, ("const", "n_strong", "n_weak", "e_strong", "e_weak"))):
            r = ols_clustered(yv, X, names, ds.exam)
            p = r.p
            panels[panel][obs] = {"Strong": (float(r.coef[1]), float(r.se[1]), float(p[1])),
                                  "Weak": (float(r.coef[2]), float(r.se[2]), float(p[2]))}
    return BalanceReport(observables, panels, len(ds))


def format_balance(report: BalanceReport, width=12):
    head = " " * 8 + "".join(f"{o[:width - 1]:>{width}}" for o in report.observables)
    lines = []
    titles = {"without": "Without controls for the expected number of connections",
              "with": "Including controls for the expected number of connections"}
    for panel in ("without", "with"):
        lines += [titles[panel], head]
        for row in ("Strong", "Weak"):
            coefs, ses = [], []
            for o in report.observables:
                c, s, p = report.panels[panel][o][row]
                coefs.append(f"{c:.3f}{stars(p)}".rjust(width))
                ses.append(f"({s:.3f})".rjust(width))
            lines.append(f"{row:<8}" + "".join(coefs))
            lines.append(" " * 8 + "".join(ses))
        lines.append("")
    lines.append(f"Observations: {report.n}")
    return "\n".join(lines)


@dataclass
class VarianceSelection:
    spec: BaselineVarSpec
    selected: tuple
    z: dict
    full_fit: FitResult
    restricted_fit: FitResult | None = None
    lr: LrTestResult | None = None
    table: list = field(default_factory=list)


def select_baseline_variance(ds: Dataset, significance_threshold=1.96,
                             always_keep=("e_strong", "e_weak"), threshold=None,
                             options: FitOptions | None = None,
                             include_expected=True) -> VarianceSelection:
    """Pick baseline log-variance regressors from unconnected candidates.

    Fits ``Phi[(x beta - a_e) exp(-delta x)]`` with every mean-design column
    in ``delta``, keeps columns whose clustered ``|z|`` reaches
    ``significance_threshold`` plus ``always_keep``, refits the restricted
    model and reports the LR test against the full one. Single pass.
    """
    sub = ds.subset(~ds.connected)
    if len(sub) == 0:
        raise ValueError("no unconnected candidates")
    threshold = threshold or ThresholdSpec("grouped_effects")
    full = ModelSpec(bias=BiasSpec("none"), info=InfoSpec("none"),
                     baseline=BaselineVarSpec("full"), threshold=threshold,
                     include_expected=include_expected)
    res = fit(full, sub, options=options)
    attach_covariance(res)
    L = res.params_hat.layout
    block = set(L.block_names("delta_base"))
    z = {}
    table = []
    for name, est, se, zz, p in z_table(res):
        if name in block:
            z[name.split(":", 1)[1]] = zz
            table.append((name, est, se, zz, p))
    cols = full.baseline_columns(sub)
    keep = tuple(c for c in cols if abs(z[c]) >= significance_threshold or c in always_keep)
    chosen = BaselineVarSpec("preferred_subset", keep)
    restricted = None
    lr = None
    if set(keep) != set(cols):
        restricted = fit(full.replace(baseline=chosen), sub, options=options)
        lr = lr_test(restricted, res)
    return VarianceSelection(chosen, keep, z, res, restricted, lr, table)
