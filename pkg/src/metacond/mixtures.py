"""
Finite Gaussian mixtures: density, closed-form marginals and conditionals,
composition sampling and EM fitting.

Conditioning a mixture yields a mixture of the conditioned components whose
weights are re-scaled by each component's density at the conditioning point,

    w_k(x2) = a_k f_k(x2) / sum_m a_m f_m(x2),

computed here in log space.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .errors import (DegenerateConditioning, DomainError, EmptyComponent,
                     NotPositiveDefinite, SingularComponent)
from .gaussian import (_LOG_2PI, GaussianParams, _check_keep, cholesky,
                       gaussian_condition)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Mixture:
    """K-component Gaussian mixture in dimension d.

    Parameters
    ----------
    weights : array_like, shape (K,)
    means : array_like, shape (K, d)
    covs : array_like, shape (K, d, d)
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = np.asarray(self.means, dtype=float)
        if m.ndim == 1:
            m = m[:, None]
        S = np.asarray(self.covs, dtype=float)
        if S.ndim == 1:
            S = S[:, None, None]
        K, d = m.shape
        if w.shape != (K,) or S.shape != (K, d, d):
            raise DomainError(
                f"inconsistent mixture shapes: weights {w.shape}, means {m.shape}, covs {S.shape}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError(f"mixture weights must lie on the simplex, got {w}")
        for a in (w, m, S):
            a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", S)

    @classmethod
    def from_components(cls, weights, components):
        return cls(weights, np.array([c.mean for c in components]),
                   np.array([c.cov for c in components]))

    @property
    def n_components(self):
        return self.weights.size

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def components(self):
        return [GaussianParams(m, S) for m, S in zip(self.means, self.covs)]

    def moments(self):
        """Mean vector and covariance matrix of the mixture."""
        mean = self.weights @ self.means
        second = np.einsum("k,kij->ij", self.weights, self.covs) + np.einsum(
            "k,ki,kj->ij", self.weights, self.means, self.means)
        return mean, second - np.outer(mean, mean)


def _batched_cholesky(covs):
    try:
        Ls = np.linalg.cholesky(covs)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    piv = np.diagonal(Ls, axis1=1, axis2=2)
    if not np.all(np.isfinite(Ls)) or np.any(piv * piv <= 1e-300):
        raise NotPositiveDefinite("Cholesky pivot not above 1e-300")
    return Ls


def _lse(a, axis=-1):
    # log-sum-exp along one axis without scipy's per-call overhead
    mx = np.max(a, axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - mx), axis=axis, keepdims=True)) + mx
    return np.squeeze(out, axis=axis)


def component_logpdfs(X, m):
    """Matrix of ``log a_k + log f_k(x_i)``, shape (n, K)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = m.dim
    Ls = _batched_cholesky(m.covs)
    # triangular inverses of small factors; stacked so all components go at once
    Linv = np.linalg.inv(Ls)
    D = X[:, None, :] - m.means[None]
    r = np.einsum("kij,nkj->nki", Linv, D)
    logdet = np.sum(np.log(np.diagonal(Ls, axis1=1, axis2=2)), axis=1)
    # far-away points overflow to -inf, which callers handle
    with np.errstate(divide="ignore", over="ignore"):
        logw = np.log(m.weights)
        return logw - 0.5 * (d * _LOG_2PI + np.sum(r * r, axis=2)) - logdet


def mixture_logpdf(x, m):
    """Log-density of the mixture at a point (d,) or a batch (n, d)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    X = x.reshape(1, -1) if single else x
    if X.shape[1] != m.dim:
        raise DomainError(f"point dimension {X.shape[1]} != mixture dimension {m.dim}")
    out = logsumexp(component_logpdfs(X, m), axis=1)
    return out[0] if single else out


def mixture_marginalize(m, keep):
    """Marginal mixture over ``keep``: same weights, marginalized components."""
    keep = _check_keep(keep, m.dim)
    return Mixture(m.weights, m.means[:, keep], m.covs[:, keep][:, :, keep])


def mixture_condition(m, split, x_given):
    """Conditional mixture of ``split.target`` given ``x[split.given] = x_given``.

    Raises
    ------
    DegenerateConditioning
        If every component assigns zero density to ``x_given``.
    """
    split.validate(m.dim)
    x_given = np.atleast_1d(np.asarray(x_given, dtype=float))
    if not split.given:
        return mixture_marginalize(m, split.target)
    if x_given.size != len(split.given):
        raise DomainError(
            f"{x_given.size} conditioning values for {len(split.given)} given indices")
    logw = component_logpdfs(x_given[None, :], mixture_marginalize(m, split.given))[0]
    norm = logsumexp(logw)
    if not np.isfinite(norm):
        raise DegenerateConditioning(
            f"all components have zero density at the conditioning point {x_given}")
    w = np.exp(logw - norm)
    w = w / w.sum()
    comps = [gaussian_condition(c, split, x_given) for c in m.components]
    return Mixture.from_components(w, comps)


def mixture_sample(m, n, rng, return_labels=False):
    """Composition sampling: pick a component, then draw from it."""
    if n < 1:
        raise DomainError("n must be at least 1")
    labels = rng.choice(m.n_components, size=n, p=m.weights)
    z = rng.standard_normal((n, m.dim))
    out = np.empty((n, m.dim))
    for k in range(m.n_components):
        idx = labels == k
        if np.any(idx):
            L = cholesky(m.covs[k])
            out[idx] = m.means[k] + z[idx] @ L.T
    return (out, labels) if return_labels else out


def align_components(reference_means, means):
    """Permutation ``perm`` minimizing sum ||reference_means[k] - means[perm[k]]||."""
    ref = np.atleast_2d(reference_means)
    est = np.atleast_2d(means)
    cost = np.linalg.norm(ref[:, None, :] - est[None, :, :], axis=2)
    _, perm = linear_sum_assignment(cost)
    return perm


@dataclass
class EmConfig:
    """EM settings.

    ``ridge=None`` selects the default loading ``1e-9 * trace(S) / d`` where
    ``S`` is the sample covariance of the data.
    """

    max_iter: int = 500
    rel_tol: float = 1e-8
    n_restarts: int = 5
    init: str = "kmeans"
    ridge: float = None
    monotone_slack: float = 1e-9

    def __post_init__(self):
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")
        if self.rel_tol <= 0:
            raise DomainError("rel_tol must be > 0")
        if self.init not in ("kmeans", "random-responsibility"):
            raise DomainError(f"unknown EM init {self.init!r}")


def _kmeans_seed(X, K, rng):
    # k-means++ seeding followed by a few Lloyd sweeps; returns hard labels
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    for _ in range(1, K):
        d2 = np.min(((X[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(X[rng.integers(n)])
        else:
            centers.append(X[rng.choice(n, p=d2 / total)])
    C = np.array(centers)
    for _ in range(10):
        labels = np.argmin(((X[:, None, :] - C[None]) ** 2).sum(-1), axis=1)
        for k in range(K):
            if np.any(labels == k):
                C[k] = X[labels == k].mean(axis=0)
    return np.argmin(((X[:, None, :] - C[None]) ** 2).sum(-1), axis=1)


def _m_step(X, R, ridge):
    n, d = X.shape
    Nk = R.sum(axis=0)
    bad = np.flatnonzero(Nk < 1e-12)
    if bad.size:
        raise EmptyComponent(f"component(s) {bad.tolist()} have responsibility mass below 1e-12")
    w = Nk / n
    means = (R.T @ X) / Nk[:, None]
    D = X[:, None, :] - means[None]
    covs = np.einsum("nk,nki,nkj->kij", R, D, D) / Nk[:, None, None]
    covs = 0.5 * (covs + np.swapaxes(covs, 1, 2)) + ridge * np.eye(d)
    try:
        _batched_cholesky(covs)
    except NotPositiveDefinite:
        bad = [k for k in range(covs.shape[0]) if np.any(np.linalg.eigvalsh(covs[k]) <= 0)]
        raise SingularComponent(f"component(s) {bad} covariance is not positive definite") from None
    return Mixture(w / w.sum(), means, covs)


def _em_single(X, K, cfg, ridge, rng):
    n, d = X.shape
    if cfg.init == "kmeans":
        labels = _kmeans_seed(X, K, rng)
        R = np.zeros((n, K))
        R[np.arange(n), labels] = 1.0
    else:
        R = rng.dirichlet(np.ones(K), size=n)
    m = _m_step(X, R, ridge)
    trace = []
    prev = None
    for it in range(cfg.max_iter):
        lp = component_logpdfs(X, m)
        ll_i = _lse(lp)
        ll = float(ll_i.sum())
        if not np.isfinite(ll):
            raise SingularComponent("non-finite log-likelihood during EM")
        trace.append(ll)
        if prev is not None:
            if ll < prev - cfg.monotone_slack * max(1.0, abs(prev)):
                logger.warning("EM log-likelihood decreased at iteration %d (%.6g -> %.6g)",
                               it, prev, ll)
                break
            if abs(ll - prev) <= cfg.rel_tol * max(1.0, abs(prev)):
                break
        prev = ll
        R = np.exp(lp - ll_i[:, None])
        m = _m_step(X, R, ridge)
    else:
        ll = float(_lse(component_logpdfs(X, m)).sum())
        trace.append(ll)
    return m, ll, trace


def em_fit(data, K, cfg=None, rng=None, return_trace=False):
    """Fit a K-component Gaussian mixture by EM.

    Runs ``cfg.n_restarts`` independent restarts (each with its own stream
    spawned from ``rng``) and returns the best ``(mixture, loglik)``. With
    ``return_trace=True`` the per-iteration log-likelihood trace of the
    winning restart is appended to the returned tuple.

    Raises
    ------
    EmptyComponent, SingularComponent
        If every restart fails.
    """
    cfg = EmConfig() if cfg is None else cfg
    rng = np.random.default_rng() if rng is None else rng
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if K < 1:
        raise DomainError("K must be >= 1")
    if n <= K * d:
        logger.warning("EM with n=%d points for K=%d components in dimension %d", n, K, d)
    if cfg.ridge is None:
        S = np.atleast_2d(np.cov(X, rowvar=False, bias=True))
        ridge = 1e-9 * np.trace(S) / d
    else:
        ridge = cfg.ridge
    best = None
    last_err = None
    for child in rng.spawn(max(1, cfg.n_restarts)):
        try:
            m, ll, trace = _em_single(X, K, cfg, ridge, child)
        except (EmptyComponent, SingularComponent) as err:
            last_err = err
            continue
        if best is None or ll > best[1]:
            best = (m, ll, trace)
    if best is None:
        raise last_err
    return best if return_trace else best[:2]
