"""
Gaussian mixture copula model (GMCM).

The copula density of a Gaussian mixture ``psi`` with margins ``psi_j`` is

    c(u) = psi(z) / prod_j psi_j(z_j),   z_j = Psi_j^{-1}(u_j),

where ``Psi_j`` is the j-th marginal mixture CDF. Because the copula is
invariant to per-coordinate affine maps, parameters are kept standardized:
component 0 has zero mean and a correlation matrix as covariance.

Three fitters are provided:

- ``AD``: Adam on an unconstrained chart with exact gradients. The quantile
  ``z_j`` depends on the parameters; its derivative is obtained from the
  implicit-function rule ``dz/dtheta = -(dPsi_j/dtheta)(z) / psi_j(z)``.
- ``FD``: derivative-free Nelder-Mead on the same chart.
- ``PEM``: pseudo-EM, alternating quantile refresh, E-step and M-step.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.special import ndtr, ndtri

from .errors import DomainError, NonFiniteObjective
from .marginals import UnivariateMixture, gmm_cdf, gmm_quantile_columns
from .mixtures import EmConfig, Mixture, _lse, em_fit, mixture_sample

logger = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GmcmParams:
    """Gaussian mixture whose implicit copula is the model."""

    mixture: Mixture
    standardized: bool = False

    def __post_init__(self):
        if self.standardized:
            mu0 = self.mixture.means[0]
            var0 = np.diag(self.mixture.covs[0])
            if np.max(np.abs(mu0)) > 1e-9 or np.max(np.abs(var0 - 1)) > 1e-9:
                raise DomainError("standardized GMCM needs component 0 with mean 0, unit variances")

    @property
    def dim(self):
        return self.mixture.dim

    @property
    def n_components(self):
        return self.mixture.n_components

    def margin(self, j):
        return UnivariateMixture.from_mixture(self.mixture, j)


def standardize(p):
    """Map parameters so that component 0 has zero mean and unit variances.

    Applies ``mu_k -> D^{-1} (mu_k - mu_0)`` and ``S_k -> D^{-1} S_k D^{-1}``
    with ``D = diag(sqrt(diag(S_0)))``; the copula is unchanged.
    """
    m = p.mixture
    D = np.sqrt(np.diag(m.covs[0]))
    means = (m.means - m.means[0]) / D
    covs = m.covs / np.outer(D, D)
    covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
    # pin the standardized entries exactly
    means[0] = 0.0
    idx = np.arange(m.dim)
    covs[0][idx, idx] = 1.0
    return GmcmParams(Mixture(m.weights, means, covs), standardized=True)


def affine_transform(p, scale, shift):
    """Parameters of the mixture of ``diag(scale) X + shift``."""
    scale = np.asarray(scale, dtype=float)
    m = p.mixture
    return GmcmParams(Mixture(m.weights, m.means * scale + shift,
                              m.covs * np.outer(scale, scale)))


def _check_u(U):
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if np.any(~(U > 0) | ~(U < 1)):
        raise DomainError("copula observations must lie strictly inside (0, 1)")
    return U


def latent_scores(U, p, z0=None):
    """Quantile transform ``z_ij = Psi_j^{-1}(u_ij)`` under the model's margins."""
    U = _check_u(U)
    m = p.mixture
    sds = np.sqrt(np.diagonal(m.covs, axis1=1, axis2=2))
    return gmm_quantile_columns(U, m.weights, m.means.T, sds.T, z0)


def _joint_terms(Z, weights, means, chols):
    # log(a_k phi_k(z_i)) and Sigma_k^{-1} (z_i - mu_k)
    n, d = Z.shape
    K = weights.size
    logc = np.empty((n, K))
    sols = np.empty((K, n, d))
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    for k in range(K):
        L = chols[k]
        e = Z - means[k]
        r = solve_triangular(L, e.T, lower=True)
        sols[k] = cho_solve((L, True), e.T).T
        logc[:, k] = (logw[k] - 0.5 * (d * _LOG_2PI + np.sum(r * r, axis=0))
                      - np.sum(np.log(np.diag(L))))
    return logc, sols


def _marginal_terms(Z, weights, means, sds):
    # t_ijk, log(a_k N(t)/s) and log psi_j(z_ij); arrays are (n, d, K)
    t = (Z[:, :, None] - means.T[None]) / sds.T[None]
    with np.errstate(divide="ignore"):
        loga = np.log(weights)[None, None, :] - 0.5 * t * t - np.log(sds.T)[None] - 0.5 * _LOG_2PI
    logpsi = _lse(loga, axis=2)
    return t, loga, logpsi


def gmcm_loglik(U, p, z0=None, return_scores=False):
    """Copula log-likelihood ``sum_i [log psi(z_i) - sum_j log psi_j(z_ij)]``.

    Raises
    ------
    DomainError
        If an observation lies outside (0, 1).
    """
    Z = latent_scores(U, p, z0)
    m = p.mixture
    chols = [np.linalg.cholesky(S) for S in m.covs]
    logc, _ = _joint_terms(Z, m.weights, m.means, chols)
    sds = np.sqrt(np.diagonal(m.covs, axis1=1, axis2=2))
    _, _, logpsi = _marginal_terms(Z, m.weights, m.means, sds)
    ll = float(np.sum(_lse(logc, axis=1)) - np.sum(logpsi))
    return (ll, Z) if return_scores else ll


# ---------------------------------------------------------------------------
# unconstrained chart
# ---------------------------------------------------------------------------

@dataclass
class UnconstrainedGmcm:
    """Unconstrained coordinates of a standardized GMCM.

    ``weight_logits`` holds logits 1..K-1 (logit 0 is pinned to zero);
    ``means`` holds rows 1..K-1 (row 0 is pinned to zero). ``chol_factors``
    holds K lower-triangular matrices with the diagonal stored as logs.
    Factor 0 has its log-diagonal pinned to zero; its rows are normalized to
    unit length when mapped back, which makes component 0 a correlation
    matrix.
    """

    weight_logits: np.ndarray
    means: np.ndarray
    chol_factors: np.ndarray

    @property
    def n_components(self):
        return self.chol_factors.shape[0]

    @property
    def dim(self):
        return self.chol_factors.shape[1]

    def to_vector(self):
        K, d = self.n_components, self.dim
        lo = np.tril_indices(d, -1)
        lo_diag = np.tril_indices(d)
        parts = [self.weight_logits.ravel(), self.means.ravel(),
                 self.chol_factors[0][lo]]
        parts += [self.chol_factors[k][lo_diag] for k in range(1, K)]
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, vec, K, d):
        vec = np.asarray(vec, dtype=float)
        if vec.size != n_free_params(K, d):
            raise DomainError(f"expected {n_free_params(K, d)} parameters, got {vec.size}")
        pos = 0
        logits = vec[pos:pos + K - 1]
        pos += K - 1
        means = vec[pos:pos + (K - 1) * d].reshape(K - 1, d)
        pos += (K - 1) * d
        F = np.zeros((K, d, d))
        lo = np.tril_indices(d, -1)
        n_lo = len(lo[0])
        F[0][lo] = vec[pos:pos + n_lo]
        pos += n_lo
        lo_diag = np.tril_indices(d)
        n_ld = len(lo_diag[0])
        for k in range(1, K):
            F[k][lo_diag] = vec[pos:pos + n_ld]
            pos += n_ld
        return cls(logits.copy(), means.copy(), F)


def n_free_params(K, d):
    return (K - 1) + (K - 1) * d + d * (d - 1) // 2 + (K - 1) * d * (d + 1) // 2


def _chart_factors(x):
    # Cholesky factors of every component plus the pre-normalization rows of
    # component 0
    K, d = x.n_components, x.dim
    Ls = np.empty((K, d, d))
    raw0 = np.tril(x.chol_factors[0], -1) + np.eye(d)
    norms0 = np.linalg.norm(raw0, axis=1)
    Ls[0] = raw0 / norms0[:, None]
    for k in range(1, K):
        F = x.chol_factors[k]
        Ls[k] = np.tril(F, -1) + np.diag(np.exp(np.diag(F)))
    return Ls, raw0, norms0


def _chart_natural(x):
    logits = np.concatenate([[0.0], x.weight_logits])
    w = np.exp(logits - _lse(logits))
    means = np.vstack([np.zeros((1, x.dim)), x.means])
    Ls, raw0, norms0 = _chart_factors(x)
    return w, means, Ls, raw0, norms0


def from_unconstrained(x):
    """Standardized :class:`GmcmParams` for chart coordinates ``x``."""
    w, means, Ls, _, _ = _chart_natural(x)
    covs = Ls @ np.swapaxes(Ls, 1, 2)
    idx = np.arange(x.dim)
    covs[0][idx, idx] = 1.0
    return GmcmParams(Mixture(w / w.sum(), means, covs), standardized=True)


def to_unconstrained(p):
    """Chart coordinates of ``p`` (standardized first if needed)."""
    if not p.standardized:
        p = standardize(p)
    m = p.mixture
    K, d = m.n_components, m.dim
    with np.errstate(divide="ignore"):
        logw = np.log(np.maximum(m.weights, 1e-300))
    logits = logw[1:] - logw[0]
    F = np.zeros((K, d, d))
    L0 = np.linalg.cholesky(m.covs[0])
    F[0] = np.tril(L0 / np.diag(L0)[:, None], -1)
    for k in range(1, K):
        L = np.linalg.cholesky(m.covs[k])
        F[k] = np.tril(L, -1) + np.diag(np.log(np.diag(L)))
    return UnconstrainedGmcm(logits, m.means[1:].copy(), F)


def _natural_gradient(Z, w, means, Ls):
    """Log-likelihood and its gradient with respect to (w, means, covs).

    Weights are treated as free coordinates; covariance gradients ``G_k``
    are symmetric with ``dll = sum_k tr(G_k dS_k)``.
    """
    n, d = Z.shape
    K = w.size
    logc, sols = _joint_terms(Z, w, means, Ls)
    logpsi_joint = _lse(logc, axis=1)
    R = np.exp(logc - logpsi_joint[:, None])  # (n, K)

    sds = np.sqrt(np.einsum("kij,kij->ki", Ls, Ls))  # sqrt(diag(L L^T))
    t, loga, logpsi = _marginal_terms(Z, w, means, sds)
    rho = np.exp(loga - logpsi[:, :, None])  # (n, d, K)
    ll = float(np.sum(logpsi_joint) - np.sum(logpsi))

    g_w = np.zeros(K)
    g_mu = np.zeros((K, d))
    G = np.zeros((K, d, d))
    dz = np.zeros((n, d))
    for k in range(K):
        Rk = R[:, k]
        s = sols[k]
        g_w[k] += Rk.sum() / w[k] if w[k] > 0 else 0.0
        g_mu[k] += Rk @ s
        Sinv = cho_solve((Ls[k], True), np.eye(d))
        G[k] += 0.5 * ((s * Rk[:, None]).T @ s - Rk.sum() * Sinv)
        dz -= Rk[:, None] * s

    sds_T = sds.T[None]  # (1, d, K)
    # direct derivatives of the marginal log-densities
    with np.errstate(divide="ignore", invalid="ignore"):
        g_w -= np.where(w > 0, rho.sum(axis=(0, 1)) / w, 0.0)
    g_mu -= np.sum(rho * t / sds_T, axis=0).T
    g_var = -np.sum(rho * 0.5 * (t * t - 1.0) / sds_T ** 2, axis=0).T  # (K, d)
    dlogpsi_dz = -np.sum(rho * t / sds_T, axis=2)

    # implicit dependence of z on the parameters
    c = dz - dlogpsi_dz  # (n, d)
    cdf_over_psi = ndtr(t) * np.exp(-logpsi)[:, :, None]
    g_w -= np.einsum("ij,ijk->k", c, cdf_over_psi)
    g_mu += np.einsum("ij,ijk->kj", c, rho)
    g_var += np.einsum("ij,ijk->kj", c, rho * t / (2.0 * sds_T))
    idx = np.arange(d)
    G[:, idx, idx] += g_var
    return ll, g_w, g_mu, G


def _chart_gradient(x, g_w, g_mu, G):
    K, d = x.n_components, x.dim
    w, _, Ls, raw0, norms0 = _chart_natural(x)
    g_logits = (w * (g_w - w @ g_w))[1:]
    gF = np.zeros((K, d, d))
    gL0 = np.tril(2.0 * G[0] @ Ls[0])
    y = Ls[0]
    gy = gL0
    graw = (gy - y * np.sum(y * gy, axis=1, keepdims=True)) / norms0[:, None]
    gF[0] = np.tril(graw, -1)
    for k in range(1, K):
        gL = np.tril(2.0 * G[k] @ Ls[k])
        diag = np.diag(gL) * np.diag(Ls[k])
        gF[k] = np.tril(gL, -1) + np.diag(diag)
    return UnconstrainedGmcm(g_logits, g_mu[1:], gF).to_vector()


def gmcm_grad(U, x, z0=None, return_scores=False):
    """Log-likelihood and its exact gradient in the unconstrained chart.

    Parameters
    ----------
    U : array_like, shape (n, d)
        Copula observations in (0, 1).
    x : UnconstrainedGmcm
    z0 : ndarray, optional
        Warm start for the quantile solves.

    Returns
    -------
    ll : float
    grad : ndarray
        Gradient ordered as :meth:`UnconstrainedGmcm.to_vector`.
    """
    p = from_unconstrained(x)
    Z = latent_scores(U, p, z0)
    w, means, Ls, _, _ = _chart_natural(x)
    ll, g_w, g_mu, G = _natural_gradient(Z, w, means, Ls)
    grad = _chart_gradient(x, g_w, g_mu, G)
    return (ll, grad, Z) if return_scores else (ll, grad)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

@dataclass
class FitOptions:
    """Settings shared by the three GMCM fitters.

    ``tol`` is a relative log-likelihood change; Adam stops once it has held
    for ``patience`` consecutive iterations.
    """

    method: str = "AD"
    max_iter: int = 10000
    learning_rate: float = 1e-3
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    tol: float = 1e-8
    patience: int = 20
    seed: int = 0
    em: EmConfig = field(default_factory=lambda: EmConfig(n_restarts=5))

    def __post_init__(self):
        if self.method not in ("AD", "FD", "PEM"):
            raise DomainError(f"unknown GMCM fitting method {self.method!r}")
        if self.learning_rate <= 0:
            raise DomainError("learning_rate must be > 0")


def initial_params(U, K, rng, cfg=None):
    """EM fit on probit scores ``Phi^{-1}(u)``, standardized."""
    U = _check_u(U)
    mix, _ = em_fit(ndtri(U), K, cfg, rng)
    return standardize(GmcmParams(mix))


def _check_finite(ll, it):
    if not np.isfinite(ll):
        raise NonFiniteObjective(f"copula log-likelihood is {ll} at iteration {it}", it)


def _fit_adam(U, p0, opts):
    x = to_unconstrained(p0)
    K, d = x.n_components, x.dim
    theta = x.to_vector()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2 = opts.adam_betas
    n = U.shape[0]
    Z = None
    trace = []
    best_ll, best_theta = -np.inf, theta.copy()
    calm = 0
    for it in range(1, opts.max_iter + 1):
        ll, g, Z = gmcm_grad(U, UnconstrainedGmcm.from_vector(theta, K, d), Z, return_scores=True)
        _check_finite(ll, it)
        trace.append(ll)
        if ll > best_ll:
            best_ll, best_theta = ll, theta.copy()
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= opts.tol * max(1.0, abs(trace[-2])):
            calm += 1
            if calm >= opts.patience:
                break
        else:
            calm = 0
        step = -g / n
        m = b1 * m + (1 - b1) * step
        v = b2 * v + (1 - b2) * step * step
        mhat = m / (1 - b1 ** it)
        vhat = v / (1 - b2 ** it)
        theta = theta - opts.learning_rate * mhat / (np.sqrt(vhat) + opts.adam_eps)
    return from_unconstrained(UnconstrainedGmcm.from_vector(best_theta, K, d)), trace


def _fit_nelder_mead(U, p0, opts):
    x0 = to_unconstrained(p0)
    K, d = x0.n_components, x0.dim
    n = U.shape[0]
    cache = {"z": None}
    trace = []

    def objective(theta):
        p = from_unconstrained(UnconstrainedGmcm.from_vector(theta, K, d))
        try:
            ll, Z = gmcm_loglik(U, p, cache["z"], return_scores=True)
        except np.linalg.LinAlgError:
            return np.inf
        if not np.isfinite(ll):
            return np.inf
        cache["z"] = Z
        return -ll / n

    def record(theta):
        trace.append(-objective(theta) * n)

    f0 = objective(x0.to_vector())
    _check_finite(-f0, 0)
    trace.append(-f0 * n)
    res = minimize(objective, x0.to_vector(), method="Nelder-Mead", callback=record,
                   options={"maxiter": opts.max_iter, "xatol": 1e-8,
                            "fatol": opts.tol * max(1.0, abs(f0)), "adaptive": True})
    if not np.isfinite(res.fun):
        raise NonFiniteObjective("Nelder-Mead ended on a non-finite objective", res.nit)
    return from_unconstrained(UnconstrainedGmcm.from_vector(res.x, K, d)), trace


def _fit_pem(U, p0, opts):
    p = p0
    ridge = None
    Z = None
    trace = []
    for it in range(1, opts.max_iter + 1):
        ll, Z = gmcm_loglik(U, p, Z, return_scores=True)
        _check_finite(ll, it)
        trace.append(ll)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= opts.tol * max(1.0, abs(trace[-2])):
            break
        m = p.mixture
        chols = [np.linalg.cholesky(S) for S in m.covs]
        logc, _ = _joint_terms(Z, m.weights, m.means, chols)
        R = np.exp(logc - _lse(logc, axis=1)[:, None])
        if ridge is None:
            ridge = 1e-9 * np.trace(np.cov(Z, rowvar=False, bias=True)) / Z.shape[1]
        Nk = R.sum(axis=0)
        if np.any(Nk < 1e-12):
            logger.warning("pseudo-EM emptied a component at iteration %d", it)
            break
        w = Nk / Nk.sum()
        means = (R.T @ Z) / Nk[:, None]
        covs = np.empty_like(m.covs)
        for k in range(m.n_components):
            D = Z - means[k]
            S = (D * R[:, k:k + 1]).T @ D / Nk[k]
            covs[k] = 0.5 * (S + S.T) + ridge * np.eye(Z.shape[1])
        p = standardize(GmcmParams(Mixture(w, means, covs)))
    return p, trace


def fit_gmcm(U, K, opts=None, rng=None, init=None):
    """Fit a K-component GMCM to copula observations.

    All methods start from :func:`initial_params` (unless ``init`` is given)
    and return standardized parameters with the per-iteration log-likelihood
    trace. ``AD`` returns its best-seen iterate.

    Raises
    ------
    NonFiniteObjective
        If the log-likelihood becomes NaN or infinite.
    """
    opts = FitOptions() if opts is None else opts
    rng = np.random.default_rng(opts.seed) if rng is None else rng
    U = _check_u(U)
    if K < 1:
        raise DomainError("K must be >= 1")
    p0 = initial_params(U, K, rng, opts.em) if init is None else standardize(init)
    if opts.method == "AD":
        return _fit_adam(U, p0, opts)
    if opts.method == "FD":
        return _fit_nelder_mead(U, p0, opts)
    return _fit_pem(U, p0, opts)


def gmcm_sample(p, n, rng):
    """Draw ``n`` copula observations: mixture draws pushed through the marginal CDFs."""
    X = mixture_sample(p.mixture, n, rng)
    U = np.column_stack([gmm_cdf(X[:, j], p.margin(j)) for j in range(p.dim)])
    return np.clip(U, 1e-15, 1 - 1e-15)
