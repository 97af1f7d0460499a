"""
Synthetic data generators with known conditional laws.

``gmm``
    Two-component bivariate Gaussian mixture; column 0 is the response and
    column 1 the predictor.
``meta-gmm``
    Same mixture used as a copula, with standard normal margins:
    ``X_j = Phi^{-1}(F_j(Y_j))`` where ``F_j`` is the mixture margin.
``gmcm-2d`` / ``gmcm-3d``
    Copula observations (uniform margins) from the two benchmark GMCM
    configurations used to compare fitters.
"""

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DomainError
from .gaussian import IndexSplit
from .gmcm import GmcmParams, gmcm_sample
from .marginals import UnivariateMixture, gmm_cdf, gmm_quantile, gmm_sf
from .mixtures import Mixture, mixture_condition, mixture_sample

SCENARIOS = ("gmm", "meta-gmm", "gmcm-2d", "gmcm-3d")

GMM_2D = Mixture(
    weights=[0.3, 0.7],
    means=[[4.0, 2.0], [-2.0, 1.0]],
    covs=[[[2.0, 1.0], [1.0, 1.0]], [[1.0, 0.5], [0.5, 1.0]]],
)

GMCM_2D = GmcmParams(Mixture(
    weights=[0.45, 0.55],
    means=[[5.15, 4.32], [-20.07, 3.04]],
    covs=[[[5.6, 2.3], [2.3, 8.27]], [[3.35, 1.0], [1.0, 1.16]]],
))

# the published first covariance is not exactly symmetric (-1.163544 vs -1.16);
# the two off-diagonal entries are averaged
_S1_3D = np.array([[2.26, 1.33, -1.163544], [1.33, 2.71, -1.36], [-1.16, -1.36, 3.78]])
GMCM_3D = GmcmParams(Mixture(
    weights=[0.69, 0.163, 0.147],
    means=[[1.19, 5.63, -9.67], [-6.75, 12.04, -8.44], [-5.92, -4.0, 2.58]],
    covs=[0.5 * (_S1_3D + _S1_3D.T),
          [[12.24, 4.14, -3.87], [4.14, 10.33, 2.76], [-3.87, 2.76, 16.45]],
          [[3.19, -0.38, 0.54], [-0.38, 0.76, -0.02], [0.54, -0.02, 1.01]]],
))

GMCM_CONFIGS = {"2d": GMCM_2D, "3d": GMCM_3D}


def _normal_scores(y, margin):
    # Phi^{-1}(F(y)) evaluated on the tail that keeps precision
    cdf = gmm_cdf(y, margin)
    sf = gmm_sf(y, margin)
    return np.where(cdf < 0.5, ndtri(cdf), -ndtri(sf))


def generate(scenario, n, rng):
    """Draw ``n`` rows from a named scenario.

    Returns
    -------
    data : ndarray, shape (n, d)
    columns : list of str
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    if scenario == "gmm":
        return mixture_sample(GMM_2D, n, rng), ["x1", "x2"]
    if scenario == "meta-gmm":
        Y = mixture_sample(GMM_2D, n, rng)
        X = np.column_stack([_normal_scores(Y[:, j], UnivariateMixture.from_mixture(GMM_2D, j))
                             for j in range(2)])
        return X, ["x1", "x2"]
    if scenario in ("gmcm-2d", "gmcm-3d"):
        p = GMCM_CONFIGS[scenario[-2:]]
        return gmcm_sample(p, n, rng), [f"u{j + 1}" for j in range(p.dim)]
    raise DomainError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")


def true_conditional_cdf(scenario, x_given, grid):
    """Exact CDF of column 0 given column 1 for ``gmm`` and ``meta-gmm``."""
    grid = np.asarray(grid, dtype=float)
    split = IndexSplit((0,), (1,))
    if scenario == "gmm":
        cond = mixture_condition(GMM_2D, split, [x_given])
        y = grid
    elif scenario == "meta-gmm":
        m2 = UnivariateMixture.from_mixture(GMM_2D, 1)
        y2 = gmm_quantile(ndtr(x_given), m2)
        cond = mixture_condition(GMM_2D, split, [float(y2)])
        y = gmm_quantile(np.clip(ndtr(grid), 1e-300, 1 - 1e-16),
                         UnivariateMixture.from_mixture(GMM_2D, 0))
    else:
        raise DomainError(f"no analytic conditional for scenario {scenario!r}")
    return gmm_cdf(y, UnivariateMixture.from_mixture(cond, 0))

