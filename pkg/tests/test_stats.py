import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from connprobit.stats import log_norm_cdf, mills_ratio, norm_cdf, norm_pdf, norm_quantile

# 50-digit mpmath values, frozen.
LOG_CDF = {
    -40.0: -804.60844201375378817,
    -37.0: -689.0305855768905936,
    -20.0: -203.91715537109726394,
    -10.0: -53.231285150512470578,
    -5.0: -15.064998393988725736,
    -1.0: -1.8410216450092635058,
    0.0: -0.69314718055994530942,
    1.0: -0.17275377902344988953,
    5.0: -2.8665161296376359338e-7,
    8.0: -6.2209605742717860585e-16,
}


def test_cdf_simple_values():
    assert norm_cdf(0.0) == 0.5
    assert norm_cdf(1.959964) == pytest.approx(0.9750000009035575957, abs=1e-15)
    assert norm_pdf(0.0) == pytest.approx(0.3989422804014327, rel=1e-15)
    assert norm_pdf(3.0) == pytest.approx(0.0044318484119380071756, rel=1e-14)


def test_deep_tail_cdf():
    p = norm_cdf(-40.0)
    assert p >= 0.0
    assert math.isfinite(log_norm_cdf(-40.0))


@pytest.mark.parametrize("z, expected", sorted(LOG_CDF.items()))
def test_log_cdf_frozen_oracle(z, expected):
    assert log_norm_cdf(z) == pytest.approx(expected, rel=1e-12)


def test_log_cdf_right_tail_branch():
    # ln(1 - p) with p = Phi(-5)
    assert log_norm_cdf(5.0) == pytest.approx(math.log1p(-norm_cdf(-5.0)), rel=1e-12)


def test_log_cdf_continuous_at_switch():
    lo, hi = log_norm_cdf(-5.0 - 1e-9), log_norm_cdf(-5.0 + 1e-9)
    assert abs(lo - hi) < 1e-7


def test_quantile():
    assert norm_quantile(0.5) == 0.0
    assert norm_quantile(0.975) == pytest.approx(1.9599639845400542355, abs=1e-12)
    for bad in (0.0, 1.0, -0.1, 1.5, float("nan")):
        with pytest.raises(ValueError):
            norm_quantile(bad)


def test_quantile_round_trip_grid():
    p = np.concatenate([np.logspace(-8, -1, 30), np.linspace(0.1, 0.9, 30),
                        1 - np.logspace(-8, -1, 30)])
    assert np.max(np.abs(norm_cdf(norm_quantile(p)) - p)) < 1e-12


def test_vectorized_shapes():
    z = np.linspace(-3, 3, 7)
    assert norm_cdf(z).shape == (7,)
    assert isinstance(norm_cdf(0.3), float)
    assert isinstance(log_norm_cdf(-7.0), float)


def test_mills_ratio_matches_definition():
    z = np.array([-30.0, -6.0, 0.0, 2.0])
    mp.mp.dps = 40
    want = [float(mp.npdf(v) / mp.ncdf(v)) for v in z]
    np.testing.assert_allclose(mills_ratio(z), want, rtol=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.floats(-37.0, 8.0))
def test_log_cdf_against_live_oracle(z):
    mp.mp.dps = 50
    want = float(mp.log(mp.ncdf(z)))
    assert log_norm_cdf(z) == pytest.approx(want, rel=1e-10, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(st.floats(-50.0, 50.0))
def test_cdf_symmetry(z):
    assert abs(norm_cdf(z) + norm_cdf(-z) - 1.0) < 1e-15


@settings(max_examples=100, deadline=None)
@given(st.floats(-40.0, 40.0), st.floats(-40.0, 40.0))
def test_cdf_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    assert norm_cdf(lo) <= norm_cdf(hi)
    assert log_norm_cdf(lo) <= log_norm_cdf(hi)


def test_pdf_is_derivative_of_cdf():
    z = np.linspace(-6, 6, 241)
    h = 1e-5
    fd = (norm_cdf(z + h) - norm_cdf(z - h)) / (2 * h)
    assert np.max(np.abs(fd - norm_pdf(z))) < 1e-8
    assert np.array_equal(norm_pdf(z), norm_pdf(-z))


def test_quantile_inverts_cdf():
    z = np.linspace(-6, 6, 121)
    err = np.abs(norm_quantile(norm_cdf(z)) - z)
    assert np.max(err[z <= 5.0]) < 1e-9
    # above z = 5 the stored Phi(z) itself is only good to eps(1) / 2
    bound = 1e-9 + np.finfo(float).eps / norm_pdf(z)
    assert np.all(err <= bound)
