import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from connprobit.data import Candidate, Dataset, Exam
from connprobit.likelihood import candidate_scores, evaluate, log_likelihood, loglik_only, \
    predict_prob
from connprobit.simulate import DgpConfig, simulate
from connprobit.spec import ModelSpec, ParamVector, ThresholdSpec
from connprobit.stats import norm_cdf, norm_pdf

from helpers import central_gradient, gradient_matches, random_theta


@pytest.fixture(scope="module")
def ds200():
    return simulate(DgpConfig(n_exams=10, candidates_per_exam=20, info_mode="parametric",
                              info_params={"delta_c": 0.2}, seed=21))[0]


def test_single_candidate():
    spec = ModelSpec.model(6, include_expected=False)
    ds = Dataset.from_records([Candidate(1, (0.7,), 0, 0, 0.0, 0.0, "e")],
                              [Exam("e", (), 7, 1)], ("x",))
    L = spec.layout(ds)
    p = ParamVector(L).set(x=0.0, **{"a:const": 0.0})
    v = log_likelihood(spec, p, ds)
    assert v.loglik == pytest.approx(math.log(0.5), abs=1e-15)
    lam = norm_pdf(0.0) / norm_cdf(0.0)
    assert v.gradient[L.index("x")] == pytest.approx(lam * 0.7, rel=1e-14)
    assert v.gradient[L.index("a:const")] == pytest.approx(-lam, rel=1e-14)
    assert v.gradient[L.index("B")] == 0.0


@pytest.mark.parametrize("k", [6, 7, 8, 9])
@pytest.mark.parametrize("threshold", ["grouped_effects", "fixed_effects"])
def test_gradient_matches_finite_differences(ds200, k, threshold):
    spec = ModelSpec.model(k, interacted=("x1", "x2"), threshold=ThresholdSpec(threshold))
    design = spec.compile(ds200)
    theta = random_theta(design.layout, np.random.default_rng(k))
    g = evaluate(design, theta).gradient
    fd = central_gradient(lambda t: loglik_only(design, t), theta)
    assert gradient_matches(g, fd)


def test_delta_gradient_sign_agrees_with_finite_differences(ds200):
    # connected candidates far from their threshold with surprising outcomes
    spec = ModelSpec.model(6)
    design = spec.compile(ds200)
    L = design.layout
    theta = np.zeros(L.size)
    theta[L.index("x1")] = 2.0
    mean, _ = design.index(theta)
    y = np.where(ds200.connected, (mean < 0).astype(int), ds200.y)
    d2 = spec.compile(ds200.replace(y=y), L)
    j = L.index("delta_c")
    g = evaluate(d2, theta).gradient[j]
    e = np.zeros(L.size)
    e[j] = 1e-6
    fd = (loglik_only(d2, theta + e) - loglik_only(d2, theta - e)) / 2e-6
    assert g > 0 and fd > 0
    assert g == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("threshold", ["grouped_effects", "fixed_effects"])
def test_cluster_scores_sum_to_gradient(ds200, threshold):
    spec = ModelSpec.model(8, threshold=ThresholdSpec(threshold))
    design = spec.compile(ds200)
    theta = np.random.default_rng(3).normal(0, 0.3, design.layout.size)
    v = evaluate(design, theta, clusters=True)
    assert v.cluster_scores.shape == (ds200.n_exams, design.layout.size)
    assert np.max(np.abs(v.cluster_scores.sum(axis=0) - v.gradient)) < 1e-10
    S = candidate_scores(design, theta)
    assert np.max(np.abs(S.sum(axis=0) - v.gradient)) < 1e-10


def test_non_finite_parameters_rejected(ds200):
    design = ModelSpec.model(6).compile(ds200)
    theta = np.zeros(design.layout.size)
    theta[0] = np.nan
    with pytest.raises(ValueError):
        evaluate(design, theta)


def test_loglik_finite_in_extreme_tails(ds200):
    design = ModelSpec.model(6).compile(ds200)
    L = design.layout
    theta = np.zeros(L.size)
    theta[L.index("x1")] = 200.0
    theta[L.index("delta_c")] = -9.0
    v = evaluate(design, theta)
    assert np.isfinite(v.loglik) and np.all(np.isfinite(v.gradient))


def _two_candidates(xb, a, B, sigma):
    spec = ModelSpec.model(6, include_expected=False)
    ds = Dataset.from_records([Candidate(0, (xb,), 0, 0, 0.0, 0.0, "e"),
                               Candidate(0, (xb,), 1, 0, 0.0, 0.0, "e")],
                              [Exam("e", (), 7, 1)], ("x",))
    p = ParamVector(spec.layout(ds)).set(x=1.0, B=B, delta_c=math.log(sigma),
                                         **{"a:const": a})
    c_u, c_c = ds.candidates
    ex = ds.exams[0]
    return (predict_prob(spec, p, c_u, ex, ("x",)), predict_prob(spec, p, c_c, ex, ("x",)))


def test_threshold_point_is_one_half():
    pu, _ = _two_candidates(0.4, 0.4, 0.3, 2.0)
    assert pu == 0.5


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-1, 1), st.floats(0.01, 2.0))
def test_favors_shift_curve_left(xb, a, B):
    pu, pc = _two_candidates(xb, a, B, 1.0)
    if 0 < pu < 1:
        assert pc > pu


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-1, 1), st.floats(1.05, 4.0))
def test_information_single_crossing(xb, a, sigma):
    pu, pc = _two_candidates(xb, a, 0.0, sigma)
    if xb - a > 1e-8 and pu < 1:
        assert pc < pu
    elif a - xb > 1e-8 and pu > 0:
        assert pc > pu
    elif xb == a:
        assert pc == pu == 0.5
