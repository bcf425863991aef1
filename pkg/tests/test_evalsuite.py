import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from synthetic import arch_epd_returns, arch_gaussian_returns
from hcr.errors import ContractError, InsufficientDataError, RankError
from hcr.evalsuite import (
    ArchModel,
    EvalReport,
    arch_normalize,
    coverage_curve,
    evaluate_models,
    fit_arch01,
    fit_linear_predictor,
    hcr_chain,
    log_likelihood_bits,
    sorted_prediction_curve,
)
from hcr.marginals import MarginalModel, fit_epd, normalize


def test_bits_examples():
    assert log_likelihood_bits(np.ones(10)) == 0.0
    assert log_likelihood_bits(np.full(10, 2.0)) == 1.0
    with pytest.raises(ContractError):
        log_likelihood_bits([1.0, 0.0])
    with pytest.raises(ContractError):
        log_likelihood_bits([1.0, -0.2])
    with pytest.raises(InsufficientDataError):
        log_likelihood_bits([])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=50), st.randoms(use_true_random=False))
def test_bits_permutation_invariant(d, rnd):
    perm = list(d)
    rnd.shuffle(perm)
    assert log_likelihood_bits(perm) == pytest.approx(log_likelihood_bits(d), rel=1e-12, abs=1e-12)


def test_coverage_of_correct_model():
    n = 100_000
    m = MarginalModel("laplace", 0.0, 1.0)
    cov = coverage_curve(normalize(m.sample(n, 1), m))
    assert cov.ks_statistic < 1.63 / math.sqrt(n)
    assert cov.ks_statistic == pytest.approx(cov.max_deviation + 0.5 / n, abs=1e-15) or \
        cov.ks_statistic >= cov.max_deviation
    assert stats.kstest(cov.sorted_values, "uniform").statistic == pytest.approx(cov.ks_statistic, abs=1e-12)


def test_coverage_shrinks_with_n():
    m = MarginalModel("gaussian", 0.0, 1.0)
    ks = [coverage_curve(m.cdf(m.sample(n, 2))).ks_statistic for n in (1000, 100_000)]
    assert ks[1] < ks[0]


def test_coverage_heavy_tails_under_gaussian():
    y = MarginalModel("laplace", 0.0, 1.0).sample(20_000, 3)
    g = MarginalModel("gaussian", 0.0, float(np.std(y)))
    assert coverage_curve(g.cdf(y)).ks_statistic > 5 / math.sqrt(20_000)


def test_coverage_constant_input_is_step():
    cov = coverage_curve(np.full(10, 0.3))
    np.testing.assert_array_equal(cov.sorted_values, 0.3)
    assert cov.max_deviation == pytest.approx(0.65)


def test_sorted_prediction_curve():
    srt, frac = sorted_prediction_curve(np.ones(20))
    np.testing.assert_array_equal(srt, 1.0)
    assert frac == 0.0
    rng = np.random.default_rng(4)
    base = rng.uniform(0.2, 2.0, 1000)
    better = base * rng.uniform(1.0, 1.5, 1000)
    assert np.all(sorted_prediction_curve(better)[0] >= sorted_prediction_curve(base)[0])


def test_arch_homoskedastic():
    n = 20_000
    y = np.random.default_rng(5).normal(0, 0.01, n)
    model, dens = fit_arch01(y)
    assert model.alpha1 < 3 * math.sqrt(1 / n) * 3
    assert model.alpha0 == pytest.approx(1e-4, rel=0.05)
    assert dens.shape == (n - 1,)


def test_arch_recovers_parameters():
    a0, a1, n = 1e-5, 0.4, 20_000
    fits = [fit_arch01(arch_gaussian_returns(n, a0, a1, seed=s))[0] for s in range(12)]
    est = np.array([[f.alpha0, f.alpha1] for f in fits])
    se = est.std(axis=0, ddof=1)
    assert np.all(np.abs(est[0] - [a0, a1]) < 3 * se)
    assert np.all(np.abs(est.mean(axis=0) - [a0, a1]) < 3 * se / math.sqrt(len(fits)) + 1e-12)


def test_arch_std_form():
    y = arch_gaussian_returns(5000, 1e-5, 0.3, seed=1)
    var_model, dv = fit_arch01(y, "variance")
    std_model, ds = fit_arch01(y, "std")
    assert std_model.form == "std" and np.all(ds > 0)
    assert np.all(std_model.sd(y[:-1]) > 0)


def test_arch_densities_and_cdf_consistent():
    m = ArchModel(1e-4, 0.3)
    y = arch_gaussian_returns(300, 1e-4, 0.3, seed=2)
    s = m.sd(y[:-1])
    np.testing.assert_allclose(m.densities(y), stats.norm.pdf(y[1:], scale=s), rtol=1e-12)
    np.testing.assert_allclose(m.cdf(y), stats.norm.cdf(y[1:], scale=s), rtol=1e-12)
    x = arch_normalize(y, m).x
    assert np.all((x > 0) & (x < 1))


def test_arch_needs_data():
    with pytest.raises(InsufficientDataError):
        fit_arch01(np.ones(10))


def test_linear_predictor_constant():
    lp = fit_linear_predictor(np.full(50, 2.5), 3)
    np.testing.assert_array_equal(lp.beta, [2.5, 0, 0, 0])


def test_linear_predictor_random_walk():
    v = np.cumsum(np.random.default_rng(6).standard_normal(5000))
    lp = fit_linear_predictor(v, 3)
    assert lp.beta[1] == pytest.approx(1.0, abs=0.05)


def test_linear_predictor_matches_lstsq():
    rng = np.random.default_rng(7)
    v = np.zeros(2000)
    for t in range(2, 2000):
        v[t] = 0.3 + 0.5 * v[t - 1] - 0.2 * v[t - 2] + rng.standard_normal()
    lp = fit_linear_predictor(v, 2)
    X = np.column_stack([np.ones(1998), v[1:-1], v[:-2]])
    ref = np.linalg.lstsq(X, v[2:], rcond=None)[0]
    np.testing.assert_allclose(lp.beta, ref, atol=1e-10)
    np.testing.assert_allclose(lp.residuals, v[2:] - X @ ref, atol=1e-10)


def test_linear_predictor_rank_error():
    v = np.tile([1.0, 2.0], 50)
    with pytest.raises(RankError):
        fit_linear_predictor(v, 2)


def test_report_serialization():
    r = EvalReport.from_scores("u", np.ones(4), np.array([0.1, 0.4, 0.6, 0.9]))
    d = r.to_dict(curves=True)
    assert d["mean_log2_density"] == 0.0 and len(d["coverage_curve"]) == 4


def test_hcr_chain_on_dependent_series():
    y = arch_epd_returns(5000, seed=1)
    epd = fit_epd(y)
    rep = hcr_chain(y, epd, 2)
    static = np.mean(np.log2(epd.pdf(y[1:])))
    assert rep.n == y.size - 1
    assert rep.mean_log2_density > static


def test_evaluate_models_order():
    rep = evaluate_models(arch_epd_returns(20_000, seed=0))
    bits = {k: r.mean_log2_density for k, r in rep.items()}
    assert bits["gaussian"] < bits["arch01"] < bits["laplace"] <= bits["epd"]
    assert bits["epd"] < bits["epd+hcr2"] <= bits["epd+hcr9"]
    assert len({r.n for r in rep.values()}) == 1
