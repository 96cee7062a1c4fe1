import functools
import math

import numpy as np
import pytest
from scipy import stats

from betaresid import simstudy
from betaresid.errors import InputError, StudyError
from betaresid.betadist import CLOGLOG, LOGIT
from betaresid.residuals import KINDS
from betaresid.simstudy import (
    ScenarioSpec,
    builtin_scenario,
    calibrate_link,
    design_hash,
    generate_design,
    mean_summary,
    rng_stream,
    run_study,
)


@pytest.mark.parametrize("sid,beta", [
    ("I", (-2.3, -1.1, -0.7)),
    ("II", (-0.3, 0.3, 0.7)),
    ("III", (4.0, -0.3, -0.5)),
    ("IV", (1.0, 0.5, -0.5)),
    ("V", (-2.5, 2.0, -0.5)),
])
def test_builtin_coefficients(sid, beta):
    spec = builtin_scenario(sid, 10.0, 16)
    assert spec.beta == beta and spec.link is LOGIT
    rule = "uniform_all" if sid in ("I", "II", "III") else "exp_normal"
    assert spec.covariate_rule == rule


def test_builtin_rejects_unknown_id():
    with pytest.raises(InputError):
        builtin_scenario("VI")


def test_spec_validation():
    with pytest.raises(InputError):
        ScenarioSpec("x", LOGIT, (0.0, 1.0, 1.0), 10.0, 3, "uniform_all")
    with pytest.raises(InputError):
        ScenarioSpec("x", LOGIT, (0.0, 1.0, 1.0), -1.0, 16, "uniform_all")
    with pytest.raises(InputError):
        ScenarioSpec("x", LOGIT, (0.0, 1.0, 1.0), 1.0, 16, "gamma")


def test_scenario_ii_mean_range():
    spec = builtin_scenario("II", 10.0, 16)
    mu = LOGIT.inverse(generate_design(spec) @ np.array(spec.beta))
    assert np.all((mu > 0.425) & (mu < 0.668))


def test_scenario_i_mean_range():
    spec = builtin_scenario("I", 10.0, 40)
    mu = LOGIT.inverse(generate_design(spec) @ np.array(spec.beta))
    assert np.all((mu > 0.016) & (mu < 0.0912))


def test_design_deterministic_and_uniform():
    spec = builtin_scenario("I", 10.0, 40, master_seed=11)
    a, b = generate_design(spec), generate_design(spec)
    assert np.array_equal(a, b) and design_hash(a) == design_hash(b)
    assert np.all(a[:, 0] == 1.0)
    assert np.all((a[:, 1:] > 0) & (a[:, 1:] < 1))
    other = generate_design(builtin_scenario("I", 10.0, 40, master_seed=12))
    assert design_hash(a) != design_hash(other)


def test_design_does_not_depend_on_phi():
    a = generate_design(builtin_scenario("IV", 10.0, 16))
    b = generate_design(builtin_scenario("IV", 100.0, 16))
    assert np.array_equal(a, b)


@pytest.mark.parametrize("exp_mean", [2.0, 0.5])
def test_exponential_covariate_mean(exp_mean):
    spec = builtin_scenario("IV", 10.0, 10_000, exp_mean=exp_mean)
    X = generate_design(spec)
    assert abs(X[:, 1].mean() - exp_mean) < 0.03 * exp_mean
    assert abs(X[:, 2].mean()) < 0.05 and abs(X[:, 2].std() - 1.0) < 0.03


def test_default_exponential_mean_matches_scenario_v_mean_range():
    # Scenario V targets a median mean response in (0.15, 0.30); an
    # exponential covariate with mean 2 would push it well above that.
    def median_mu(exp_mean):
        spec = builtin_scenario("V", 10.0, 10_000, exp_mean=exp_mean)
        return np.median(LOGIT.inverse(generate_design(spec) @ np.array(spec.beta)))

    assert 0.13 < median_mu(0.5) < 0.30
    assert median_mu(2.0) > 0.5


def test_calibrate_link_matches_summaries():
    spec = builtin_scenario("I", 10.0, 16)
    X = generate_design(spec)
    beta, mismatch = calibrate_link(X, spec.beta, CLOGLOG)
    ref = mean_summary(LOGIT.inverse(X @ np.array(spec.beta)))
    got = mean_summary(CLOGLOG.inverse(X @ beta))
    assert np.allclose(got, ref, rtol=0.01)
    assert np.max(np.abs(mismatch)) < 0.01


def test_cloglog_scenario_records_reference():
    spec = builtin_scenario("I", 10.0, 16, link="cloglog")
    assert spec.link is CLOGLOG and spec.reference_beta == (-2.3, -1.1, -0.7)
    assert spec.beta != spec.reference_beta


def test_rng_stream_reproducible_and_distinct():
    a = rng_stream(3, 5).standard_normal(100)
    assert np.array_equal(a, rng_stream(3, 5).standard_normal(100))
    assert not np.array_equal(a, rng_stream(3, 6).standard_normal(100))
    assert not np.array_equal(a, rng_stream(3, 5, "envelope").standard_normal(100))


def test_rng_streams_look_independent():
    x = rng_stream(1, 0).random(20_000)
    y = rng_stream(1, 1).random(20_000)
    table, _, _ = np.histogram2d(x, y, bins=5)
    assert stats.chi2_contingency(table).pvalue > 0.01


def test_tiny_study_is_defined():
    s = run_study(builtin_scenario("II", 10.0, 16), n_rep=2)
    for kind in KINDS:
        assert np.all(np.isnan(s.per_obs[kind]["kurtosis"]))
        assert np.all(np.isfinite(s.per_obs[kind]["variance"]))
    assert len(s.rows()) == 18


def test_study_rejects_bad_arguments():
    spec = builtin_scenario("II")
    with pytest.raises(InputError):
        run_study(spec, 1)
    with pytest.raises(InputError):
        run_study(spec, 10, kinds=("pearson",))


@pytest.fixture(scope="module")
def small_study():
    return run_study(builtin_scenario("II", 10.0, 16, master_seed=5), n_rep=600)


def test_study_table_shape(small_study):
    s = small_study
    rows = s.rows()
    assert len(rows) == 16 + 2
    assert rows[-2][0] == "Mean" and rows[-1][0] == "SD"
    assert all(len(r) == len(s.header()) for r in rows)
    for kind in KINDS:
        t = s.ad_table[kind]
        assert t["min"] <= t["q1"] <= t["q2"] <= t["q3"] <= t["max"]
        assert s.column_mean_ad(kind) == pytest.approx(np.mean(s.per_obs[kind]["ad"]))
        pearson = s.per_obs[kind]["kurtosis"] >= s.per_obs[kind]["skewness"] ** 2 + 1
        assert np.all(pearson)


def test_study_thread_invariant(small_study):
    again = run_study(builtin_scenario("II", 10.0, 16, master_seed=5), n_rep=600, threads=3)
    for kind in KINDS:
        for stat in small_study.STATS:
            assert np.array_equal(small_study.per_obs[kind][stat], again.per_obs[kind][stat])


def test_study_prefix_is_stable(small_study):
    part = run_study(builtin_scenario("II", 10.0, 16, master_seed=5), n_rep=250,
                     keep_residuals=True)
    full = run_study(builtin_scenario("II", 10.0, 16, master_seed=5), n_rep=600,
                     keep_residuals=True)
    assert np.array_equal(part.residuals["quantile"], full.residuals["quantile"][:250])


def test_redraw_cap(monkeypatch):
    real = simstudy.fit_batch
    calls = {"n": 0}

    def flaky(Y, *args, **kwargs):
        out = real(Y, *args, **kwargs)
        calls["n"] += 1
        if calls["n"] == 1:
            out.converged[:5] = False
        return out

    monkeypatch.setattr(simstudy, "fit_batch", flaky)
    with pytest.raises(StudyError, match="scenario II"):
        run_study(builtin_scenario("II"), n_rep=100)


def test_redraws_within_cap_are_reported(monkeypatch):
    real = simstudy.fit_batch
    calls = {"n": 0}

    def flaky(Y, *args, **kwargs):
        out = real(Y, *args, **kwargs)
        calls["n"] += 1
        if calls["n"] == 1:
            out.converged[:2] = False
        return out

    monkeypatch.setattr(simstudy, "fit_batch", flaky)
    s = run_study(builtin_scenario("II"), n_rep=100)
    assert s.redraws == 2 == math.floor(0.02 * 100)


# ---------------------------------------------------------------- slow

SEEDS = (1, 2, 3)
N_REP = 5000


@functools.lru_cache(maxsize=None)
def _column_means(sid, phi, n, seed):
    s = run_study(builtin_scenario(sid, phi, n, master_seed=seed), N_REP)
    return {k: s.column_mean_ad(k) for k in KINDS}


_PHI_CASES = []
for _sid in simstudy.SCENARIOS:
    for _kind in KINDS:
        marks = ()
        if _sid == "II" and _kind == "swr2":
            marks = pytest.mark.xfail(
                strict=True,
                reason="at n=40 swr2 AD rises from about 3.4 to 4.3 when phi goes to 100")
        _PHI_CASES.append(pytest.param(_sid, _kind, marks=marks, id=f"{_sid}-{_kind}"))


@pytest.mark.slow
@pytest.mark.parametrize("sid,kind", _PHI_CASES)
def test_larger_precision_does_not_worsen_ad(sid, kind):
    bad = []
    for seed in SEEDS:
        for n in (16, 40):
            lo, hi = _column_means(sid, 100.0, n, seed)[kind], _column_means(sid, 10.0, n, seed)[kind]
            if lo > 1.2 * hi:
                bad.append((seed, n, lo, hi))
    assert not bad, bad


@pytest.mark.slow
@pytest.mark.parametrize("sid", list(simstudy.SCENARIOS))
@pytest.mark.parametrize("phi", [10.0, 100.0])
def test_quantile_ad_falls_with_sample_size(sid, phi):
    for seed in SEEDS:
        assert _column_means(sid, phi, 40, seed)["quantile"] < _column_means(sid, phi, 16, seed)["quantile"]
