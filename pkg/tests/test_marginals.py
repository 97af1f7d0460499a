import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy.stats import kstest

from metacond.errors import DomainError, MetacondError
from metacond.marginals import (MarginalModel, UnivariateMixture, fit_marginal_aic, gmm_cdf,
                                gmm_quantile, marginal_cdf, marginal_quantile,
                                pseudo_observations)

STD = UnivariateMixture([1.0], [0.0], [1.0])
SYM = UnivariateMixture([0.5, 0.5], [-3.0, 3.0], [1.0, 1.0])


def bisection(m, u, steps=200):
    lo, hi = -1e3, 1e3
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if gmm_cdf(mid, m) < u:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def random_umix(rng, K=None):
    K = rng.integers(1, 6) if K is None else K
    return UnivariateMixture(rng.dirichlet(np.ones(K)), rng.uniform(-10, 10, K),
                             rng.uniform(0.1, 5, K))


def test_cdf_examples():
    assert gmm_cdf(0.0, STD) == 0.5
    assert gmm_cdf(-1e300, STD) == 0.0
    assert gmm_cdf(1e300, STD) == 1.0
    assert_allclose(gmm_cdf(0.0, SYM), 0.5, rtol=1e-15)


def test_quantile_examples():
    assert abs(gmm_quantile(0.5, STD)) < 1e-12
    z = gmm_quantile(0.25, SYM)
    assert -3.68 < z < -2.3
    assert abs(z - bisection(SYM, 0.25)) < 1e-9


def test_quantile_domain():
    for u in (0.0, 1.0, -0.1, np.nan):
        with pytest.raises(DomainError):
            gmm_quantile(u, STD)


def test_round_trip_grid():
    u = np.concatenate([[1e-6], np.linspace(0.01, 0.99, 99), [1 - 1e-6]])
    for m in (STD, SYM, UnivariateMixture([0.2, 0.5, 0.3], [-5, 0, 8], [0.3, 2.0, 0.7])):
        assert np.max(np.abs(gmm_cdf(gmm_quantile(u, m), m) - u)) <= 1e-10


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_quantile_inverse_and_monotone(seed):
    r = np.random.default_rng(seed)
    m = random_umix(r)
    u = np.sort(r.uniform(1e-9, 1 - 1e-9, 25))
    z = gmm_quantile(u, m)
    assert np.max(np.abs(gmm_cdf(z, m) - u)) <= 1e-10
    assert np.all(np.diff(z) >= 0)


def test_cdf_monotone_on_dense_grid():
    m = UnivariateMixture([0.2, 0.5, 0.3], [-5, 0, 8], [0.3, 2.0, 0.7])
    F = gmm_cdf(np.linspace(-20, 20, 10_000), m)
    assert np.all(np.diff(F) >= 0)


def test_pseudo_observation_examples():
    assert_allclose(pseudo_observations(np.array([3.0, 1.0, 2.0])), [0.75, 0.25, 0.5])
    assert_allclose(pseudo_observations(np.arange(5.0)), np.arange(1, 6) / 6)
    assert_allclose(pseudo_observations(np.ones(4)), np.full(4, 0.5))


def test_pseudo_observations_uniform():
    x = np.random.default_rng(0).standard_t(3, size=5000)
    U = pseudo_observations(x)
    assert np.all((U > 0) & (U < 1))
    assert kstest(U, "uniform").pvalue > 1e-3


def test_aic_selects_one_for_normal():
    x = np.random.default_rng(1).normal(size=2000)
    m = fit_marginal_aic(x, rng=np.random.default_rng(0))
    assert m.weights.size == 1
    assert abs(m.means[0]) < 0.1


def test_aic_selects_two_for_bimodal():
    r = np.random.default_rng(0)
    x = np.where(r.random(2000) < 0.5, r.normal(-4, 1, 2000), r.normal(4, 1, 2000))
    m = fit_marginal_aic(x, k_max=5, rng=np.random.default_rng(0))
    assert m.weights.size == 2


def test_aic_permutation_invariant():
    r = np.random.default_rng(3)
    x = np.concatenate([r.normal(-2, 1, 300), r.normal(3, 0.5, 200)])
    a = fit_marginal_aic(x, k_max=4, rng=np.random.default_rng(9))
    b = fit_marginal_aic(x[r.permutation(x.size)], k_max=4, rng=np.random.default_rng(9))
    assert a.weights.size == b.weights.size


def test_aic_constant_data_fails():
    with pytest.raises(MetacondError):
        fit_marginal_aic(np.full(50, 2.0), k_max=3, rng=np.random.default_rng(0))


def test_empirical_margin():
    m = MarginalModel.empirical([3.0, 1.0, 2.0])
    assert marginal_cdf(2.0, m) == 0.5
    assert_allclose(marginal_quantile(np.array([1, 2, 3]) / 4, m), [1.0, 2.0, 3.0])


def test_parametric_dispatch_is_exact():
    m = MarginalModel.parametric(SYM)
    x = np.linspace(-6, 6, 13)
    assert_array_equal(marginal_cdf(x, m), gmm_cdf(x, SYM))


def test_marginal_model_payload_rules():
    with pytest.raises(DomainError):
        MarginalModel("empirical", gmm=SYM, sorted_data=[1.0, 2.0])
    with pytest.raises(DomainError):
        MarginalModel("parametric-gmm")
