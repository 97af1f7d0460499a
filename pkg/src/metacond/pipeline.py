"""
Meta models: marginal CDFs linked by a latent family that is stable under
conditioning.

A data point ``x`` maps to the latent space by ``z_j = Psi_j^{-1}(F_j(x_j))``.
The latent law is conditioned in closed form, sampled, and mapped back by
``x_j = F_j^{-1}(Psi_j(z_j))``. For ``gmcm`` the implicit margins ``Psi_j`` are
the fitted mixture's own margins; ``gaussian-copula`` and ``tgmm`` use the
standard normal; ``student-t`` uses the univariate t.

The module also holds the conditional KDE reference sampler and the JSON
persistence of fitted models.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ndtr, ndtri
from scipy.stats import t as student_t

from .elliptical import StudentTParams, t_cdf_1d, t_condition, t_logpdf, t_sample
from .errors import (DomainError, FitError, FormatError, InsufficientAcceptance,
                     MetacondError, UnsupportedShape)
from .gaussian import GaussianParams, IndexSplit, gaussian_condition, gaussian_sample, mvn_logpdf
from .gmcm import FitOptions, GmcmParams, fit_gmcm, gmcm_loglik
from .marginals import (MarginalModel, UnivariateMixture, fit_marginal_aic, gmm_cdf,
                        gmm_quantile, marginal_cdf, marginal_quantile, pseudo_observations)
from .mixtures import EmConfig, Mixture, em_fit, mixture_condition, mixture_sample

logger = logging.getLogger(__name__)

FAMILIES = ("gmcm", "gaussian-copula", "tgmm", "student-t")
FORMAT_VERSION = 1
PIT_EPS = 1e-10

_PARAM_TYPES = {"gmcm": GmcmParams, "gaussian-copula": GaussianParams,
                "tgmm": Mixture, "student-t": StudentTParams}


@dataclass(frozen=True)
class LatentFamily:
    """A latent law tagged by family. ``gaussian-copula`` carries a
    :class:`GaussianParams` (zero mean, correlation matrix once fitted)."""

    tag: str
    params: object

    def __post_init__(self):
        if self.tag not in _PARAM_TYPES:
            raise DomainError(f"unknown latent family {self.tag!r}")
        if not isinstance(self.params, _PARAM_TYPES[self.tag]):
            raise DomainError(f"{self.tag} latent needs {_PARAM_TYPES[self.tag].__name__} params")

    @property
    def dim(self):
        return self.params.dim


@dataclass(frozen=True)
class MetaModel:
    marginals: tuple
    latent: LatentFamily
    column_names: tuple
    fit_info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        object.__setattr__(self, "column_names", tuple(str(c) for c in self.column_names))
        if not (len(self.marginals) == len(self.column_names) == self.latent.dim):
            raise DomainError("marginals, column names and latent dimension disagree")

    @property
    def dim(self):
        return len(self.marginals)


@dataclass(frozen=True)
class ConditionRequest:
    """Conditioning columns and values plus the number of draws wanted."""

    given_columns: tuple
    x_given: np.ndarray
    n_samples: int = 1000
    cdf_grid: np.ndarray = None

    def __post_init__(self):
        given = tuple(int(i) for i in np.atleast_1d(self.given_columns))
        x = np.atleast_1d(np.asarray(self.x_given, dtype=float))
        if any(b <= a for a, b in zip(given, given[1:])):
            raise DomainError(f"given columns must be strictly increasing: {given}")
        if x.size != len(given):
            raise DomainError(f"{x.size} conditioning values for {len(given)} given columns")
        if not np.all(np.isfinite(x)):
            raise DomainError("conditioning values must be finite")
        if self.n_samples < 1:
            raise DomainError("n_samples must be at least 1")
        object.__setattr__(self, "given_columns", given)
        object.__setattr__(self, "x_given", x)

    def split(self, d):
        if len(self.given_columns) >= d:
            raise DomainError("conditioning on every column leaves no target")
        s = IndexSplit.complement(self.given_columns, d)
        s.validate(d)
        return s


@dataclass
class JointConfig:
    """Settings for :func:`fit_joint`.

    ``margins`` is ``"gmm-aic"`` (parametric PIT through AIC-selected 1-D
    mixtures) or ``"empirical"`` (rank pseudo-observations).
    """

    margins: str = "gmm-aic"
    k_max: int = 10
    fit: FitOptions = field(default_factory=FitOptions)
    em: EmConfig = field(default_factory=EmConfig)
    seed: int = 0

    def __post_init__(self):
        if self.margins not in ("gmm-aic", "empirical"):
            raise DomainError(f"unknown margins option {self.margins!r}")


# ---------------------------------------------------------------------------
# implicit margins of each latent family
# ---------------------------------------------------------------------------

def _latent_cdf(lat, j, z):
    if lat.tag == "gmcm":
        return gmm_cdf(z, lat.params.margin(j))
    if lat.tag == "student-t":
        p = lat.params
        return student_t.cdf(z, p.dof, scale=np.sqrt(p.scale[j, j]))
    return ndtr(z)


def _latent_quantile(lat, j, u):
    if lat.tag == "gmcm":
        return gmm_quantile(u, lat.params.margin(j))
    if lat.tag == "student-t":
        p = lat.params
        return student_t.ppf(u, p.dof, scale=np.sqrt(p.scale[j, j]))
    return ndtri(u)


def _law_cdf_1d(params, z):
    if isinstance(params, GmcmParams):
        params = params.mixture
    if isinstance(params, Mixture):
        return gmm_cdf(z, UnivariateMixture.from_mixture(params, 0))
    if isinstance(params, GaussianParams):
        return ndtr((z - params.mean[0]) / np.sqrt(params.cov[0, 0]))
    return t_cdf_1d(z, params)


def _law_sample(params, n, rng):
    if isinstance(params, GmcmParams):
        params = params.mixture
    if isinstance(params, Mixture):
        return mixture_sample(params, n, rng)
    if isinstance(params, GaussianParams):
        return gaussian_sample(params, n, rng)
    return t_sample(params, n, rng)


def _pit(x, marg):
    return np.clip(marginal_cdf(x, marg), PIT_EPS, 1 - PIT_EPS)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def fit_marginals(data, margins="gmm-aic", k_max=10, rng=None, cfg=None):
    """Fit one :class:`MarginalModel` per column.

    Raises
    ------
    FitError
        With the failing column index and ``phase="marginal"``.
    """
    X = np.asarray(data, dtype=float)
    rng = np.random.default_rng() if rng is None else rng
    out = []
    for j, child in enumerate(rng.spawn(X.shape[1])):
        col = X[:, j]
        if np.ptp(col) == 0:
            raise FitError(f"column {j} is constant; its marginal cannot be fitted",
                           column=j, phase="marginal")
        if margins == "empirical":
            out.append(MarginalModel.empirical(col))
            continue
        try:
            out.append(MarginalModel.parametric(fit_marginal_aic(col, k_max, child, cfg)))
        except MetacondError as err:
            raise FitError(f"marginal fit failed for column {j}: {err}",
                           column=j, phase="marginal") from err
    return out


def copula_observations(data, marginals):
    """Uniform scores: ranks for empirical margins, clamped PIT otherwise."""
    X = np.asarray(data, dtype=float)
    cols = []
    for j, marg in enumerate(marginals):
        if marg.kind == "empirical":
            cols.append(pseudo_observations(X[:, j]))
        else:
            cols.append(_pit(X[:, j], marg))
    return np.column_stack(cols)


def _gc_loglik(Z, R):
    return float(np.sum(mvn_logpdf(Z, GaussianParams(np.zeros(R.shape[0]), R)))
                 - np.sum(-0.5 * (np.log(2 * np.pi) + Z * Z)))


def _probit_correlation(U):
    R = np.corrcoef(ndtri(U), rowvar=False)
    return 0.5 * (R + R.T)


def fit_student_t_copula(U, dof_bounds=(0.5, 500.0)):
    """Correlation from probit scores, then a bounded 1-D search over log dof.

    Returns
    -------
    params : StudentTParams
    loglik : float
        Copula log-likelihood at the selected dof.
    """
    R = _probit_correlation(U)
    d = R.shape[0]

    def negll(log_nu):
        nu = np.exp(log_nu)
        Z = student_t.ppf(U, nu)
        p = StudentTParams(np.zeros(d), R, nu)
        return -(np.sum(t_logpdf(Z, p)) - np.sum(student_t.logpdf(Z, nu)))

    res = minimize_scalar(negll, bounds=np.log(dof_bounds), method="bounded",
                          options={"xatol": 1e-4})
    return StudentTParams(np.zeros(d), R, float(np.exp(res.x))), float(-res.fun)


def fit_latent(U, family, K=2, cfg=None, rng=None):
    """Fit the latent family to copula observations ``U``.

    Returns
    -------
    latent : LatentFamily
    info : dict
        ``loglik`` and ``iterations`` of the fit.
    """
    cfg = JointConfig() if cfg is None else cfg
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    if family == "gmcm":
        params, trace = fit_gmcm(U, K, cfg.fit, rng)
        return LatentFamily("gmcm", params), {"loglik": gmcm_loglik(U, params),
                                              "iterations": len(trace)}
    if family == "gaussian-copula":
        R = _probit_correlation(U)
        return (LatentFamily("gaussian-copula", GaussianParams(np.zeros(R.shape[0]), R)),
                {"loglik": _gc_loglik(ndtri(U), R), "iterations": 1})
    if family == "tgmm":
        mix, ll, trace = em_fit(ndtri(U), K, cfg.em, rng, return_trace=True)
        return LatentFamily("tgmm", mix), {"loglik": ll, "iterations": len(trace)}
    if family == "student-t":
        params, ll = fit_student_t_copula(U)
        return LatentFamily("student-t", params), {"loglik": ll, "iterations": 1,
                                                   "dof": params.dof}
    raise DomainError(f"unknown latent family {family!r}; expected one of {FAMILIES}")


def fit_joint(data, family, K=2, cfg=None, column_names=None, marginals=None):
    """Fit marginals, transform to copula scale, fit the latent family.

    Parameters
    ----------
    data : array_like, shape (n, d)
        ``n >= 20`` rows and ``d >= 2`` columns.
    family : {"gmcm", "gaussian-copula", "tgmm", "student-t"}
    K : int
        Mixture components for ``gmcm`` and ``tgmm``.
    cfg : JointConfig, optional
    marginals : sequence of MarginalModel, optional
        Reuse already-fitted marginals.

    Raises
    ------
    FitError
        Carrying the failing column (marginal phase) or ``phase="copula"``.
    """
    cfg = JointConfig() if cfg is None else cfg
    X = np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[0] < 20 or X.shape[1] < 2:
        raise DomainError(f"need at least 20 rows and 2 columns, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DomainError("data contain non-finite values")
    if family not in FAMILIES:
        raise DomainError(f"unknown latent family {family!r}; expected one of {FAMILIES}")
    n, d = X.shape
    names = [f"x{j + 1}" for j in range(d)] if column_names is None else list(column_names)
    rng_marg, rng_lat = np.random.default_rng(cfg.seed).spawn(2)
    if marginals is None:
        marginals = fit_marginals(X, cfg.margins, cfg.k_max, rng_marg)
    U = copula_observations(X, marginals)
    try:
        latent, info = fit_latent(U, family, K, cfg, rng_lat)
    except MetacondError as err:
        raise FitError(f"{family} latent fit failed: {err}", phase="copula") from err
    info = dict(info, family=family, K=K if family in ("gmcm", "tgmm") else None,
                margins=cfg.margins, n=n)
    return MetaModel(marginals, latent, names, info)


# ---------------------------------------------------------------------------
# conditioning
# ---------------------------------------------------------------------------

def to_latent(m, x, cols):
    """Latent coordinates ``Psi_j^{-1}(clamp(F_j(x_j)))`` for the listed columns."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    cols = [int(c) for c in np.atleast_1d(cols)]
    if x.shape[-1] != len(cols):
        raise DomainError("x and cols have different lengths")
    if cols and (min(cols) < 0 or max(cols) >= m.dim):
        raise DomainError(f"columns {cols} out of range for dimension {m.dim}")
    out = np.empty(x.shape)
    for i, j in enumerate(cols):
        out[..., i] = _latent_quantile(m.latent, j, _pit(x[..., i], m.marginals[j]))
    return out


def from_latent(m, z, cols):
    """Data-scale coordinates ``F_j^{-1}(clamp(Psi_j(z_j)))``."""
    z = np.asarray(z, dtype=float)
    out = np.empty(z.shape)
    for i, j in enumerate(cols):
        u = np.clip(_latent_cdf(m.latent, j, z[..., i]), PIT_EPS, 1 - PIT_EPS)
        out[..., i] = marginal_quantile(u, m.marginals[j])
    return out


def conditional_latent(m, req):
    """Closed-form conditional law of the target columns in the latent space."""
    split = req.split(m.dim)
    z_given = to_latent(m, req.x_given, split.given)
    lat = m.latent
    if lat.tag == "gmcm":
        return LatentFamily("gmcm", GmcmParams(mixture_condition(lat.params.mixture, split,
                                                                 z_given)))
    if lat.tag == "tgmm":
        return LatentFamily("tgmm", mixture_condition(lat.params, split, z_given))
    if lat.tag == "gaussian-copula":
        return LatentFamily("gaussian-copula", gaussian_condition(lat.params, split, z_given))
    return LatentFamily("student-t", t_condition(lat.params, split, z_given))


def conditional_sample(m, req, rng):
    """``req.n_samples`` draws of the target columns given ``req.x_given``."""
    split = req.split(m.dim)
    law = conditional_latent(m, req)
    Z = _law_sample(law.params, req.n_samples, rng)
    return from_latent(m, Z, split.target)


def conditional_cdf(m, req, grid=None):
    """Conditional CDF of a single target column over a sorted grid.

    Raises
    ------
    UnsupportedShape
        If more than one column is left as target.
    """
    split = req.split(m.dim)
    if len(split.target) != 1:
        raise UnsupportedShape("conditional_cdf needs exactly one target column")
    grid = req.cdf_grid if grid is None else grid
    if grid is None:
        raise DomainError("no CDF grid supplied")
    grid = np.asarray(grid, dtype=float).ravel()
    if np.any(np.diff(grid) < 0):
        raise DomainError("CDF grid must be sorted")
    j = split.target[0]
    zg = to_latent(m, grid[:, None], [j])[:, 0]
    law = conditional_latent(m, req)
    return np.clip(_law_cdf_1d(law.params, zg), 0.0, 1.0)


# ---------------------------------------------------------------------------
# conditional KDE reference sampler
# ---------------------------------------------------------------------------

def ckde_conditional_sample(data, req, bandwidth=1.0, tol=0.1, rng=None, max_draws=2 ** 20):
    """Rejection sampler from a Gaussian-kernel KDE of the joint data.

    Joint KDE draws are generated in batches that double in size; a draw is
    kept when all its conditioning coordinates are within ``tol`` of
    ``req.x_given`` (max-norm). The first ``req.n_samples`` kept draws are
    returned, restricted to the target columns.

    Raises
    ------
    InsufficientAcceptance
        If ``max_draws`` draws yield fewer than ``req.n_samples`` acceptances.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise DomainError("data must be a matrix")
    rng = np.random.default_rng() if rng is None else rng
    n, d = X.shape
    split = req.split(d)
    t, g = list(split.target), list(split.given)
    kept, accepted, drawn = [], 0, 0
    batch = max(req.n_samples, 1024)
    while accepted < req.n_samples:
        if drawn >= max_draws:
            raise InsufficientAcceptance(
                f"CKDE accepted {accepted} of {req.n_samples} requested after {drawn} draws")
        b = min(batch, max_draws - drawn)
        P = X[rng.integers(n, size=b)] + bandwidth * rng.standard_normal((b, d))
        ok = np.max(np.abs(P[:, g] - req.x_given), axis=1) < tol
        kept.append(P[ok][:, t])
        accepted += int(ok.sum())
        drawn += b
        batch *= 2
    return np.vstack(kept)[:req.n_samples]


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _arr(a):
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _unarr(obj):
    try:
        return np.asarray(obj["data"], dtype=float).reshape(obj["shape"])
    except (KeyError, TypeError, ValueError) as err:
        raise FormatError(f"malformed array entry: {err}") from None


def _latent_to_dict(lat):
    p = lat.params
    if lat.tag == "gmcm":
        mix = p.mixture
        return {"weights": _arr(mix.weights), "means": _arr(mix.means), "covs": _arr(mix.covs),
                "standardized": bool(p.standardized)}
    if lat.tag == "tgmm":
        return {"weights": _arr(p.weights), "means": _arr(p.means), "covs": _arr(p.covs)}
    if lat.tag == "gaussian-copula":
        return {"mean": _arr(p.mean), "cov": _arr(p.cov)}
    return {"mean": _arr(p.mean), "scale": _arr(p.scale), "dof": float(p.dof)}


def _latent_from_dict(tag, obj):
    if tag == "gmcm":
        mix = Mixture(_unarr(obj["weights"]), _unarr(obj["means"]), _unarr(obj["covs"]))
        return LatentFamily(tag, GmcmParams(mix, bool(obj.get("standardized", False))))
    if tag == "tgmm":
        return LatentFamily(tag, Mixture(_unarr(obj["weights"]), _unarr(obj["means"]),
                                         _unarr(obj["covs"])))
    if tag == "gaussian-copula":
        return LatentFamily(tag, GaussianParams(_unarr(obj["mean"]), _unarr(obj["cov"])))
    if tag == "student-t":
        return LatentFamily(tag, StudentTParams(_unarr(obj["mean"]), _unarr(obj["scale"]),
                                                float(obj["dof"])))
    raise FormatError(f"unknown latent family {tag!r}")


def model_to_dict(m):
    margs = []
    for mm in m.marginals:
        if mm.kind == "parametric-gmm":
            margs.append({"kind": mm.kind, "weights": _arr(mm.gmm.weights),
                          "means": _arr(mm.gmm.means), "sds": _arr(mm.gmm.sds)})
        else:
            margs.append({"kind": mm.kind, "sorted_data": _arr(mm.sorted_data)})
    return {"format_version": FORMAT_VERSION, "family": m.latent.tag,
            "column_names": list(m.column_names), "marginals": margs,
            "latent": _latent_to_dict(m.latent), "fit_info": m.fit_info}


def model_from_dict(obj):
    if not isinstance(obj, dict):
        raise FormatError("model document must be a JSON object")
    version = obj.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported model format_version {version!r}")
    try:
        margs = []
        for mm in obj["marginals"]:
            if mm["kind"] == "parametric-gmm":
                margs.append(MarginalModel.parametric(UnivariateMixture(
                    _unarr(mm["weights"]), _unarr(mm["means"]), _unarr(mm["sds"]))))
            elif mm["kind"] == "empirical":
                margs.append(MarginalModel.empirical(_unarr(mm["sorted_data"])))
            else:
                raise FormatError(f"unknown marginal kind {mm['kind']!r}")
        latent = _latent_from_dict(obj["family"], obj["latent"])
        return MetaModel(margs, latent, obj["column_names"], obj.get("fit_info", {}))
    except (KeyError, TypeError) as err:
        raise FormatError(f"malformed model document: {err!r}") from None
    except DomainError as err:
        raise FormatError(f"invalid model parameters: {err}") from None


def save_model(m, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(m), fh, indent=1)
        fh.write("\n")


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as err:
        raise FormatError(f"model file is not valid JSON: {err}") from None
    return model_from_dict(obj)
