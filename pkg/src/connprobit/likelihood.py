"""Log-likelihood and analytic gradient of the heteroscedastic probit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .data import Candidate, Dataset, Exam
from .spec import Design, ModelSpec, ParamVector, SpecError, linear_index
from .stats import log_norm_cdf, log_norm_pdf, norm_cdf


@dataclass
class LikelihoodValue:
    loglik: float
    gradient: np.ndarray
    cluster_scores: np.ndarray | None = None


def _pieces(design: Design, theta):
    mean, log_sigma = design.index(theta)
    scale = np.exp(-log_sigma)
    m = mean * scale
    q = 2.0 * design.y - 1.0
    ll = log_norm_cdf(q * m)
    # d ll_i / d m_i, computed in logs so it stays finite in both tails
    r = q * np.exp(log_norm_pdf(m) - ll)
    return m, scale, ll, r


def _cluster_sum(values, cluster, n_clusters):
    n = len(cluster)
    ind = sparse.csr_matrix((np.ones(n), (cluster, np.arange(n))), shape=(n_clusters, n))
    out = ind @ values
    return out.toarray() if sparse.issparse(out) else np.asarray(out)


def candidate_scores(design: Design, theta):
    """Per-candidate score rows (n, k). Dense: avoid for large fixed-effect fits."""
    theta = np.asarray(theta, dtype=float)
    m, scale, _, r = _pieces(design, theta)
    w_mean = (r * scale)[:, None]
    return np.hstack([design.mean_jacobian() * w_mean, design.V * (-(r * m))[:, None]])


def evaluate(design: Design, theta, clusters=False) -> LikelihoodValue:
    """Log-likelihood and gradient at ``theta`` for a compiled design.

    Sums run over candidates in ascending index order (numpy pairwise
    reduction), so results are reproducible bit for bit.
    """
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("non-finite parameter value")
    m, scale, ll, r = _pieces(design, theta)
    L = design.layout
    w_mean = r * scale
    w_var = -(r * m)
    parts = [design.X * w_mean[:, None]]
    if design.fixed_effects:
        parts.append(None)
    else:
        parts.append(-design.T * w_mean[:, None])
    parts.append(design.G * w_mean[:, None])
    parts.append(design.V * w_var[:, None])

    grad = np.zeros(L.size)
    k_beta = design.X.shape[1]
    k_a = len(L.block_names("threshold"))
    k_g = design.G.shape[1]
    sl = [slice(0, k_beta), slice(k_beta, k_beta + k_a),
          slice(k_beta + k_a, k_beta + k_a + k_g), slice(k_beta + k_a + k_g, L.size)]
    for s, p in zip(sl, parts):
        if p is not None:
            grad[s] = p.sum(axis=0)
    if design.fixed_effects:
        grad[sl[1]] = -np.bincount(design.exam_col, weights=w_mean, minlength=k_a)

    cs = None
    if clusters:
        cs = np.zeros((design.n_clusters, L.size))
        for s, p in zip(sl, parts):
            if p is not None and p.shape[1]:
                cs[:, s] = _cluster_sum(p, design.cluster, design.n_clusters)
        if design.fixed_effects:
            cs[:, sl[1]] = -_cluster_sum(
                sparse.csr_matrix((w_mean, (np.arange(design.n), design.exam_col)),
                                  shape=(design.n, k_a)),
                design.cluster, design.n_clusters)
    return LikelihoodValue(float(ll.sum()), grad, cs)


def loglik_only(design: Design, theta):
    theta = np.asarray(theta, dtype=float)
    mean, log_sigma = design.index(theta)
    m = mean * np.exp(-log_sigma)
    return float(log_norm_cdf((2.0 * design.y - 1.0) * m).sum())


def threshold_curvature(design: Design, theta):
    """Diagonal of the Hessian in the fixed-effect threshold block."""
    m, scale, _, r = _pieces(design, np.asarray(theta, dtype=float))
    d2 = -r * (m + r)
    k_a = len(design.layout.block_names("threshold"))
    return np.bincount(design.exam_col, weights=d2 * scale ** 2, minlength=k_a)


def log_likelihood(spec: ModelSpec, params: ParamVector, ds: Dataset) -> LikelihoodValue:
    """Log-likelihood, gradient and per-exam score sums of ``params`` on ``ds``."""
    if params.layout.size != spec.layout(ds).size and spec.threshold.variant != "fixed_effects":
        raise SpecError("parameter vector does not match the model spec")
    design = spec.compile(ds, params.layout)
    return evaluate(design, params.values, clusters=True)


def predict_prob(spec: ModelSpec, params: ParamVector, cand: Candidate, exam: Exam,
                 observable_names, group_names=()):
    mean, ls = linear_index(spec, params, cand, exam, observable_names, group_names)
    return norm_cdf(mean * np.exp(-ls))


def predict_proba(design: Design, theta):
    mean, ls = design.index(np.asarray(theta, dtype=float))
    return norm_cdf(mean * np.exp(-ls))
