"""Conditional sampling and density evaluation for meta (copula) models
with Gaussian mixture and elliptical latent laws."""

from .errors import (DegenerateConditioning, DomainError, EmptyComponent, FitError,
                     FormatError, InsufficientAcceptance, MetacondError, NonFiniteObjective,
                     NotPositiveDefinite, SingularComponent, UnsupportedShape)
from .gaussian import (GaussianParams, IndexSplit, gaussian_condition, gaussian_marginalize,
                       gaussian_sample, mvn_logpdf)
from .mixtures import (EmConfig, Mixture, align_components, em_fit, mixture_condition,
                       mixture_logpdf, mixture_marginalize, mixture_sample)
from .marginals import (MarginalModel, UnivariateMixture, fit_marginal_aic, gmm_cdf, gmm_pdf,
                        gmm_quantile, gmm_sf, marginal_cdf, marginal_quantile,
                        pseudo_observations)
from .gmcm import (FitOptions, GmcmParams, fit_gmcm, gmcm_grad, gmcm_loglik, gmcm_sample,
                   latent_scores, standardize)
from .elliptical import (SunParams, StudentTParams, sun_condition, sun_logpdf_mc,
                         sun_marginalize, sun_sample, t_condition, t_logpdf, t_marginalize,
                         t_sample)
from .scoring import crps, energy_distance, energy_score, log_score_kde, variogram_score
from .pipeline import (ConditionRequest, JointConfig, LatentFamily, MetaModel,
                       ckde_conditional_sample, conditional_cdf, conditional_sample, fit_joint,
                       load_model, save_model)
from .evaluation import MethodSpec, ScoreReport, compare_fitters, evaluate_split
from .scenarios import generate, true_conditional_cdf

__version__ = "0.1.0"
