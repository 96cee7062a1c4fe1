import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from betaresid.errors import DomainError, UndefinedStatisticError
from betaresid.gof import (
    AD_CRITICAL_5PCT,
    anderson_darling,
    anderson_darling_columns,
    distribution_summary,
    moment_summary,
    moment_summary_columns,
)

finite = st.floats(-8, 8, allow_nan=False)


def test_ad_worked_value():
    # Hand evaluation: u = (Phi(-1), 1/2, Phi(1)); see the acceptance suite
    # for the mpmath evaluation of the same formula.
    assert anderson_darling([-1.0, 0.0, 1.0]) == pytest.approx(0.1895, abs=1e-4)
    assert AD_CRITICAL_5PCT == 2.492


def test_ad_detects_shift():
    assert anderson_darling([9.0, 10.0, 11.0]) > 100 * anderson_darling([-1.0, 0.0, 1.0])


def test_ad_extreme_values_stay_finite():
    assert np.isfinite(anderson_darling([-50.0, 0.0, 50.0]))


@pytest.mark.parametrize("bad", [[1.0], [0.0, np.inf], [np.nan, 1.0]])
def test_ad_domain(bad):
    with pytest.raises(DomainError):
        anderson_darling(bad)


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=2, max_size=40), st.randoms())
def test_ad_permutation_invariant(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    assert anderson_darling(ys) == pytest.approx(anderson_darling(xs), rel=1e-12, abs=1e-12)


def test_ad_location_sensitivity():
    r = np.random.default_rng(3)
    for _ in range(20):
        x = r.standard_normal(200)
        base = anderson_darling(x)
        for c in (1.0, -1.0, 2.5):
            assert anderson_darling(x + c) > base


def test_ad_columns_match_single():
    r = np.random.default_rng(4)
    X = r.standard_normal((50, 4))
    cols = anderson_darling_columns(X)
    assert np.allclose(cols, [anderson_darling(X[:, j]) for j in range(4)], rtol=1e-14)


def test_moment_examples():
    s = moment_summary([1, 2, 3, 4])
    assert s.mean == 2.5
    assert s.variance == pytest.approx(5 / 3)
    assert s.skewness == pytest.approx(0.0, abs=1e-15)
    assert s.kurtosis == pytest.approx(2.5625 / 1.5625)
    assert moment_summary([-3, -1, 0, 1, 3]).skewness == pytest.approx(0.0, abs=1e-15)


def test_moments_of_normal_sample():
    x = np.random.default_rng(5).standard_normal(5000)
    s = moment_summary(x)
    assert abs(s.mean) < 0.05 and abs(s.variance - 1) < 0.07
    assert abs(s.skewness) < 0.1 and abs(s.kurtosis - 3) < 0.25


def test_moment_errors_and_short_columns():
    with pytest.raises(UndefinedStatisticError):
        moment_summary([2.0, 2.0, 2.0])
    with pytest.raises(UndefinedStatisticError):
        moment_summary([1.0])
    assert np.isnan(moment_summary([1.0, 2.0, 4.0]).kurtosis)


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=4, max_size=30), st.floats(0.1, 100), st.floats(-50, 50))
def test_moments_affine_invariance_and_pearson(xs, a, b):
    x = np.array(xs)
    if np.ptp(x) < 1e-3:
        return
    s = moment_summary(x)
    t = moment_summary(a * x + b)
    assert t.skewness == pytest.approx(s.skewness, abs=1e-10)
    assert t.kurtosis == pytest.approx(s.kurtosis, abs=1e-10)
    assert s.variance >= 0
    assert s.kurtosis >= s.skewness ** 2 + 1 - 1e-10


def test_moment_columns_shape():
    X = np.random.default_rng(6).standard_normal((20, 3))
    mean, var, skew, kurt = moment_summary_columns(X)
    assert mean.shape == var.shape == skew.shape == kurt.shape == (3,)


def test_distribution_summary_quartiles():
    s = distribution_summary([1.0, 2.0, 3.0, 4.0, 10.0])
    assert (s["min"], s["q1"], s["q2"], s["q3"], s["max"]) == (1.0, 2.0, 3.0, 4.0, 10.0)
    assert s["mean"] == 4.0
    assert s["q1"] <= s["q2"] <= s["q3"]
