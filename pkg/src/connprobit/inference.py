"""Cluster-robust covariance, likelihood-ratio and Wald tests."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .likelihood import candidate_scores, evaluate
from .optimize import FitResult, numerical_hessian


class InferenceError(RuntimeError):
    pass


def sandwich(bread_inv, score_sums, correction=1.0):
    """``A^-1 B A^-1`` with ``B`` the sum of outer products of score rows."""
    meat = score_sums.T @ score_sums * correction
    V = bread_inv @ meat @ bread_inv
    return 0.5 * (V + V.T)


def _psd_clip(V, what="covariance"):
    w, Q = np.linalg.eigh(V)
    if w[0] < -1e-12 * max(abs(w[-1]), 1.0):
        warnings.warn(f"{what} had negative eigenvalues; clipped at 0", RuntimeWarning,
                      stacklevel=3)
    if w[0] < 0:
        V = (Q * np.clip(w, 0.0, None)) @ Q.T
        V = 0.5 * (V + V.T)
    return V


def information_matrix(fit: FitResult, step=1e-5):
    """``A = -H`` at the estimate; reuses the Hessian stored by the fit."""
    design = fit.design
    if fit.hessian is not None:
        H = fit.hessian
    else:
        H = numerical_hessian(lambda t: evaluate(design, t).gradient,
                              fit.params_hat.values, step)
    return -H


def _invert(A, names, rcond=1e-10):
    w, Q = np.linalg.eigh(A)
    if w[0] <= rcond * max(w[-1], 1e-300):
        bad = []
        for j in np.flatnonzero(w <= rcond * max(w[-1], 1e-300)):
            vec = Q[:, j]
            top = np.argsort(-np.abs(vec))[:3]
            bad.append(" + ".join(f"{vec[t]:.2f}*{names[t]}" for t in top))
        raise InferenceError("information matrix is singular along: " + "; ".join(bad))
    return (Q / w) @ Q.T


def clustered_covariance(fit: FitResult, cov_type="cluster", step=1e-5):
    """Sandwich covariance of the estimate.

    ``cov_type``: ``"cluster"`` sums scores within exams and applies the
    ``G / (G - 1)`` factor; ``"robust"`` treats every candidate as its own
    cluster (factor ``n / (n - 1)``); ``"nonrobust"`` returns ``A^-1``.
    """
    design = fit.design
    if design is None:
        raise InferenceError("fit result carries no design")
    A = information_matrix(fit, step)
    Ainv = _invert(A, list(fit.names))
    theta = fit.params_hat.values
    if cov_type == "nonrobust":
        return _psd_clip(Ainv)
    if cov_type == "cluster":
        G = design.n_clusters
        if G < 2:
            raise InferenceError("clustered covariance needs at least two clusters")
        S = evaluate(design, theta, clusters=True).cluster_scores
        V = sandwich(Ainv, S, G / (G - 1))
    elif cov_type == "robust":
        S = candidate_scores(design, theta)
        n = S.shape[0]
        V = sandwich(Ainv, S, n / (n - 1))
    else:
        raise ValueError(f"unknown cov_type {cov_type!r}")
    return _psd_clip(V)


def attach_covariance(fit: FitResult, cov_type="cluster"):
    fit.covariance = clustered_covariance(fit, cov_type)
    return fit


@dataclass(frozen=True)
class LrTestResult:
    lr_stat: float
    df: int
    p_value: float
    optimizer_suspect: bool = False


def _nested(r: FitResult, u: FitResult):
    Lr, Lu = r.params_hat.layout, u.params_hat.layout
    if Lr.embeds_in(Lu):
        return True
    # grouped thresholds are a linear restriction of exam fixed effects
    if (r.spec.threshold.variant == "grouped_effects"
            and u.spec.threshold.variant == "fixed_effects"):
        return all(set(Lr.block_names(b)) <= set(Lu.block_names(b))
                   for b in ("beta", "gamma", "delta_base", "delta_info"))
    return False


def lr_test(fit_restricted: FitResult, fit_unrestricted: FitResult, slack=1e-6):
    """Likelihood-ratio test of a restricted fit against an unrestricted one."""
    r, u = fit_restricted, fit_unrestricted
    if not _nested(r, u):
        raise InferenceError("restricted model is not nested in the unrestricted model")
    if r.n_obs != u.n_obs:
        raise InferenceError(f"fits use different samples ({r.n_obs} vs {u.n_obs} candidates)")
    df = u.n_params - r.n_params
    if df < 0:
        raise InferenceError("restricted model has more parameters")
    raw = 2.0 * (u.loglik - r.loglik)
    suspect = r.loglik > u.loglik + slack
    if raw < -slack:
        warnings.warn(f"negative LR statistic {raw:.3g}: unrestricted fit likely not at "
                      "its maximum", RuntimeWarning, stacklevel=2)
    stat = max(raw, 0.0)
    p = 1.0 if df == 0 or stat == 0.0 else float(stats.chi2.sf(stat, df))
    return LrTestResult(stat, int(df), p, bool(suspect))


def _restriction(fit, restriction):
    names = list(fit.names)
    k = len(names)
    if isinstance(restriction, str):
        restriction = {restriction: 1.0}
    if isinstance(restriction, dict):
        R = np.zeros((1, k))
        for name, c in restriction.items():
            R[0, names.index(name)] = c
        return R
    R = np.atleast_2d(np.asarray(restriction, dtype=float))
    if R.shape[1] != k:
        raise ValueError(f"restriction has {R.shape[1]} columns, model has {k} parameters")
    return R


def wald_test(fit: FitResult, restriction, value=0.0, covariance=None):
    """Test ``R theta = value``.

    ``restriction`` is a parameter name, a ``{name: coefficient}`` mapping
    or a matrix with one row per restriction. One restriction returns the
    signed z statistic with a two-sided p-value; several return the
    chi-square statistic.
    """
    V = fit.covariance if covariance is None else covariance
    if V is None:
        raise InferenceError("no covariance available; call attach_covariance first")
    R = _restriction(fit, restriction)
    q = R.shape[0]
    diff = R @ fit.params_hat.values - np.broadcast_to(np.asarray(value, dtype=float), (q,))
    RVR = R @ V @ R.T
    if q == 1:
        se = float(np.sqrt(RVR[0, 0]))
        if se <= 0:
            raise InferenceError("zero standard error")
        z = float(diff[0] / se)
        return z, 1, float(2.0 * stats.norm.sf(abs(z)))
    W = float(diff @ np.linalg.solve(RVR, diff))
    return W, q, float(stats.chi2.sf(W, q))


def z_table(fit: FitResult):
    """Per-parameter ``(estimate, se, z, p)`` rows using ``fit.covariance``."""
    se = fit.std_errors
    est = fit.params_hat.values
    rows = []
    for j, name in enumerate(fit.names):
        s = float(se[j]) if se is not None else float("nan")
        z = est[j] / s if s > 0 else float("nan")
        p = float(2.0 * stats.norm.sf(abs(z))) if np.isfinite(z) else float("nan")
        rows.append((name, float(est[j]), s, float(z), p))
    return rows


def stars(p):
    if not np.isfinite(p):
        return ""
    return "***" if p < 0.01 else "**" if p < 0.05 else "*" if p < 0.1 else ""
