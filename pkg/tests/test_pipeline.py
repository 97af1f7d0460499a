import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.stats import ks_2samp

from metacond.errors import (DomainError, FitError, FormatError, InsufficientAcceptance,
                             UnsupportedShape)
from metacond.gaussian import GaussianParams, IndexSplit, gaussian_condition
from metacond.gmcm import FitOptions, GmcmParams
from metacond.marginals import MarginalModel, UnivariateMixture, gmm_cdf, marginal_cdf
from metacond.mixtures import EmConfig, Mixture, mixture_condition, mixture_sample
from metacond.pipeline import (ConditionRequest, JointConfig, LatentFamily, MetaModel,
                               ckde_conditional_sample, conditional_cdf, conditional_latent,
                               conditional_sample, copula_observations, fit_joint,
                               fit_marginals, from_latent, load_model, model_from_dict,
                               model_to_dict, save_model, to_latent)
from metacond.scenarios import GMM_2D, generate, true_conditional_cdf
from metacond.scoring import energy_distance

STD = MarginalModel.parametric(UnivariateMixture([1.0], [0.0], [1.0]))
P3 = np.array([[1.0, 0.5, 0.3], [0.5, 1.0, -0.2], [0.3, -0.2, 1.0]])
FAST = JointConfig(fit=FitOptions(max_iter=300, learning_rate=1e-2))


def identity_chain(P=P3):
    d = P.shape[0]
    return MetaModel((STD,) * d, LatentFamily("gaussian-copula", GaussianParams(np.zeros(d), P)),
                     tuple(f"c{j}" for j in range(d)))


@pytest.fixture(scope="module")
def gmm_data():
    return generate("gmm", 1000, np.random.default_rng(0))[0]


@pytest.fixture(scope="module")
def gmm_margins(gmm_data):
    return fit_marginals(gmm_data, rng=np.random.default_rng(0))


def test_identity_chain_to_latent():
    m = identity_chain()
    x = np.array([-1.3, 0.2, 2.5])
    assert_allclose(to_latent(m, x, [0, 1, 2]), x, atol=1e-8)
    assert_allclose(to_latent(m, [0.0], [1]), [0.0], atol=1e-12)


def test_identity_chain_conditional_mean():
    m = identity_chain()
    req = ConditionRequest((1, 2), np.array([0.7, -0.4]), 20_000)
    S = conditional_sample(m, req, np.random.default_rng(1))
    g = gaussian_condition(GaussianParams(np.zeros(3), P3), IndexSplit((0,), (1, 2)), [0.7, -0.4])
    se = np.sqrt(g.cov[0, 0] / S.shape[0])
    assert abs(S.mean() - g.mean[0]) < 5 * se


def test_conditional_sample_deterministic():
    m = identity_chain()
    req = ConditionRequest((1,), np.array([0.3]), 50)
    assert_array_equal(conditional_sample(m, req, np.random.default_rng(2)),
                       conditional_sample(m, req, np.random.default_rng(2)))


def test_request_validation():
    with pytest.raises(DomainError):
        ConditionRequest((0, 1, 2), np.zeros(3)).split(3)
    with pytest.raises(Exception):
        ConditionRequest((2, 1), np.zeros(2)).split(3)


def test_conditioning_all_but_one_gives_1d_law():
    law = conditional_latent(identity_chain(), ConditionRequest((0, 2), np.array([0.1, 0.2])))
    assert law.params.mean.shape == (1,)


def test_tgmm_weights_match_closed_form():
    margins = tuple(MarginalModel.parametric(UnivariateMixture([1.0], [0.0], [1.0]))
                    for _ in range(2))
    m = MetaModel(margins, LatentFamily("tgmm", GMM_2D), ("x1", "x2"))
    for x2 in (0.0, 1.0, 2.0, 3.0):
        law = conditional_latent(m, ConditionRequest((1,), np.array([x2])))
        ref = mixture_condition(GMM_2D, IndexSplit((0,), (1,)), [x2])
        assert_allclose(law.params.weights, ref.weights, rtol=1e-10)


def test_gmcm_k1_matches_gaussian_copula():
    P = P3[:2, :2]
    margins = (STD, STD)
    a = MetaModel(margins, LatentFamily("gmcm", GmcmParams(Mixture([1.0], [[0.0, 0.0]], [P]))),
                  ("a", "b"))
    b = MetaModel(margins, LatentFamily("gaussian-copula", GaussianParams(np.zeros(2), P)),
                  ("a", "b"))
    req = ConditionRequest((1,), np.array([0.8]), 3000)
    la, lb = conditional_latent(a, req), conditional_latent(b, req)
    assert_allclose(la.params.mixture.means[0], lb.params.mean, atol=1e-8)
    Sa = conditional_sample(a, req, np.random.default_rng(3))
    Sb = conditional_sample(b, req, np.random.default_rng(4))
    assert ks_2samp(Sa[:, 0], Sb[:, 0]).pvalue > 1e-3


def test_gc_on_independent_uniforms():
    U = np.random.default_rng(5).uniform(size=(500, 2))
    m = fit_joint(U, "gaussian-copula", cfg=JointConfig(margins="empirical"))
    assert np.max(np.abs(m.latent.params.cov - np.eye(2))) < 0.05


def test_constant_column_reports_column(gmm_data):
    X = gmm_data.copy()
    X[:, 1] = 3.0
    with pytest.raises(FitError) as info:
        fit_joint(X, "gaussian-copula")
    assert info.value.column == 1
    assert info.value.phase == "marginal"


def test_fit_joint_preconditions():
    with pytest.raises(DomainError):
        fit_joint(np.zeros((10, 2)), "gaussian-copula")
    with pytest.raises(DomainError):
        fit_joint(np.random.default_rng(0).normal(size=(50, 1)), "gaussian-copula")


def test_monotone_invariance_with_empirical_margins(gmm_data):
    cfg = JointConfig(margins="empirical", fit=FitOptions(max_iter=50))
    a = fit_joint(gmm_data, "gmcm", 2, cfg)
    Y = gmm_data.copy()
    Y[:, 0] = np.exp(Y[:, 0])
    b = fit_joint(Y, "gmcm", 2, cfg)
    ma = fit_marginals(gmm_data, "empirical")
    mb = fit_marginals(Y, "empirical")
    assert_array_equal(copula_observations(gmm_data, ma), copula_observations(Y, mb))
    assert_array_equal(a.latent.params.mixture.covs, b.latent.params.mixture.covs)


@pytest.mark.parametrize("family", ["gmcm", "tgmm", "gaussian-copula", "student-t"])
def test_latent_round_trip_and_cdf_bounds(gmm_data, gmm_margins, family):
    m = fit_joint(gmm_data, family, 2, FAST, marginals=gmm_margins)
    x = gmm_data[:20]
    z = to_latent(m, x, [0, 1])
    assert_allclose(from_latent(m, z, [0, 1]), x, atol=1e-6)
    grid = np.linspace(-15, 15, 301)
    F = conditional_cdf(m, ConditionRequest((1,), np.array([1.5])), grid)
    assert np.all(np.diff(F) >= 0) and F.min() >= 0 and F.max() <= 1
    assert F[0] < 1e-3 and F[-1] > 1 - 1e-3


def test_gmcm_latent_round_trip(gmm_data, gmm_margins):
    m = fit_joint(gmm_data, "gmcm", 2, FAST, marginals=gmm_margins)
    x = gmm_data[:30, 0]
    z = to_latent(m, x[:, None], [0])[:, 0]
    marg = UnivariateMixture.from_mixture(m.latent.params.mixture, 0)
    assert_allclose(gmm_cdf(z, marg), marginal_cdf(x, m.marginals[0]), atol=1e-9)


def test_conditional_cdf_requires_one_target():
    with pytest.raises(UnsupportedShape):
        conditional_cdf(identity_chain(), ConditionRequest((2,), np.array([0.0])), [0.0])


def test_conditional_sample_close_to_truth(gmm_data, gmm_margins):
    m = fit_joint(gmm_data, "tgmm", 2, FAST, marginals=gmm_margins)
    S = conditional_sample(m, ConditionRequest((1,), np.array([2.0]), 10_000),
                           np.random.default_rng(6))[:, 0]
    grid = np.sort(S)
    emp = np.arange(1, grid.size + 1) / grid.size
    assert np.max(np.abs(emp - true_conditional_cdf("gmm", 2.0, grid))) < 0.05


def test_serialization_round_trip(tmp_path, gmm_data, gmm_margins):
    grid = np.linspace(-6, 8, 50)
    req = ConditionRequest((1,), np.array([1.0]))
    for family in ("gmcm", "tgmm", "gaussian-copula", "student-t"):
        m = fit_joint(gmm_data, family, 2, FAST, marginals=gmm_margins)
        path = tmp_path / f"{family}.json"
        save_model(m, path)
        back = load_model(path)
        assert model_to_dict(back) == model_to_dict(m)
        assert_array_equal(conditional_cdf(back, req, grid), conditional_cdf(m, req, grid))
    emp = fit_joint(gmm_data, "gaussian-copula", cfg=JointConfig(margins="empirical"))
    doc = model_to_dict(emp)
    assert model_to_dict(model_from_dict(json.loads(json.dumps(doc)))) == doc


def test_unknown_format_version():
    doc = model_to_dict(identity_chain())
    doc["format_version"] = 99
    with pytest.raises(FormatError):
        model_from_dict(doc)


def test_ckde_wide_tolerance_is_marginal_sampler():
    r = np.random.default_rng(7)
    data = r.normal(size=(300, 2)) + [5.0, 0.0]
    S = ckde_conditional_sample(data, ConditionRequest((1,), np.array([0.0]), 4000), tol=np.inf,
                                rng=r)
    assert abs(S.mean() - 5.0) < 0.1
    assert abs(S.var() - (data[:, 0].var() + 1.0)) < 0.2


def test_ckde_single_point():
    data = np.array([[2.0, -1.0]])
    S = ckde_conditional_sample(data, ConditionRequest((1,), np.array([-1.0]), 2000), tol=5.0,
                                rng=np.random.default_rng(8))
    assert abs(S.mean() - 2.0) < 0.1 and abs(S.std() - 1.0) < 0.1


def test_ckde_insufficient_acceptance():
    data = np.zeros((10, 2))
    with pytest.raises(InsufficientAcceptance):
        ckde_conditional_sample(data, ConditionRequest((1,), np.array([40.0]), 100),
                                rng=np.random.default_rng(9), max_draws=4096)
