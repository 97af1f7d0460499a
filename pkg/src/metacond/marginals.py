"""
Univariate marginal models.

Parametric margins are one-dimensional Gaussian mixtures selected by AIC;
empirical margins are rank based. The mixture quantile has no closed form
and is obtained with a bracketed, safeguarded Newton iteration that hands
any stragglers to Chandrupatla's inverse-quadratic bracketing method.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import rankdata

from .errors import DomainError, EmptyComponent, SingularComponent
from .mixtures import EmConfig, em_fit

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class UnivariateMixture:
    """One-dimensional Gaussian mixture ``sum_k w_k N(mu_k, sd_k^2)``."""

    weights: np.ndarray
    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = np.atleast_1d(np.asarray(self.means, dtype=float))
        s = np.atleast_1d(np.asarray(self.sds, dtype=float))
        if not (w.shape == m.shape == s.shape) or w.ndim != 1:
            raise DomainError("weights, means and sds must be 1-D arrays of equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError(f"weights must lie on the simplex, got {w}")
        if np.any(s <= 0):
            raise DomainError("standard deviations must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "sds", s)

    @property
    def n_components(self):
        return self.weights.size

    @property
    def n_params(self):
        return 3 * self.n_components - 1

    @classmethod
    def from_mixture(cls, mix, j=0):
        """The j-th one-dimensional margin of a multivariate :class:`Mixture`."""
        return cls(mix.weights, mix.means[:, j], np.sqrt(mix.covs[:, j, j]))


def _standardize(x, m):
    x = np.asarray(x, dtype=float)
    return (x[..., None] - m.means) / m.sds


def gmm_cdf(x, m):
    """Mixture CDF ``sum_k w_k Phi((x - mu_k) / sd_k)``, elementwise in ``x``."""
    return ndtr(_standardize(x, m)) @ m.weights


def gmm_sf(x, m):
    """Mixture survival function ``1 - gmm_cdf`` without cancellation."""
    return ndtr(-_standardize(x, m)) @ m.weights


def gmm_pdf(x, m):
    t = _standardize(x, m)
    return (np.exp(-0.5 * t * t) * _INV_SQRT_2PI / m.sds) @ m.weights


def gmm_logpdf(x, m):
    t = _standardize(x, m)
    a = -0.5 * t * t - np.log(m.sds) + np.log(np.where(m.weights > 0, m.weights, 1e-300))
    a = np.where(m.weights > 0, a, -np.inf)
    amax = np.max(a, axis=-1, keepdims=True)
    return np.log(np.sum(np.exp(a - amax), axis=-1)) + amax[..., 0] - 0.5 * np.log(2 * np.pi)


def _rows(A, idx):
    # per-point parameter rows; a single shared row broadcasts
    return A if A.shape[0] == 1 else A[idx]


def _residual(x, u, upper, W, M, S):
    # lower half solves F(x) = u, upper half solves S(x) = 1 - u (sign-flipped
    # so the residual is increasing in x in both cases); weights W (K,) are
    # shared, M and S hold one row per point or a single shared row
    t = (x[:, None] - M) / S
    tail = ndtr(np.where(upper[:, None], -t, t)) @ W
    r = np.where(upper, (1.0 - u) - tail, tail - u)
    pdf = (np.exp(-0.5 * t * t) / S) @ W * _INV_SQRT_2PI
    return r, pdf


def _converged(r, u, lo, hi, x):
    scale = np.minimum(u, 1.0 - u)
    return (np.abs(r) <= 1e-13 * scale) | (hi - lo <= 1e-13 * np.maximum(1.0, np.abs(x)))


def chandrupatla(f, a, b, fa=None, fb=None, xtol=1e-300, ftol=None, maxiter=200):
    """Vectorized Chandrupatla root finder on brackets ``[a, b]``.

    ``f(x, idx)`` returns the residuals at abscissae ``x`` for the problems
    numbered ``idx``; residuals at ``a`` and ``b`` must have opposite signs
    elementwise. ``ftol`` is an optional array of absolute residual
    tolerances.
    """
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    everything = np.arange(a.size)
    fa = f(a, everything) if fa is None else np.array(fa, dtype=float)
    fb = f(b, everything) if fb is None else np.array(fb, dtype=float)
    c, fc = a.copy(), fa.copy()
    t = np.full(a.shape, 0.5)
    active = np.ones(a.shape, dtype=bool)
    xm = np.where(np.abs(fa) < np.abs(fb), a, b)
    for _ in range(maxiter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ai, bi, ti = a[idx], b[idx], t[idx]
        xt = ai + ti * (bi - ai)
        ft = f(xt, idx)
        same = np.sign(ft) == np.sign(fa[idx])
        c_new = np.where(same, ai, bi)
        fc_new = np.where(same, fa[idx], fb[idx])
        b_new = np.where(same, bi, ai)
        fb_new = np.where(same, fb[idx], fa[idx])
        a[idx], fa[idx] = xt, ft
        b[idx], fb[idx] = b_new, fb_new
        c[idx], fc[idx] = c_new, fc_new
        use_a = np.abs(fa[idx]) < np.abs(fb[idx])
        xm_i = np.where(use_a, a[idx], b[idx])
        fm_i = np.where(use_a, fa[idx], fb[idx])
        xm[idx] = xm_i
        tol = 2.0 * _EPS * np.abs(xm_i) + xtol
        width = np.abs(b[idx] - c[idx])
        with np.errstate(divide="ignore", invalid="ignore"):
            tlim = tol / width
        done = (tlim > 0.5) | (fm_i == 0)
        if ftol is not None:
            done |= np.abs(fm_i) <= ftol[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = (a[idx] - b[idx]) / (c[idx] - b[idx])
            phi = (fa[idx] - fb[idx]) / (fc[idx] - fb[idx])
            iqi = (phi ** 2 < xi) & ((1 - phi) ** 2 < 1 - xi)
            t_iqi = (fa[idx] / (fb[idx] - fa[idx]) * fc[idx] / (fb[idx] - fc[idx])
                     + (c[idx] - a[idx]) / (b[idx] - a[idx])
                     * fa[idx] / (fc[idx] - fa[idx]) * fb[idx] / (fc[idx] - fb[idx]))
        t_new = np.where(iqi & np.isfinite(t_iqi), t_iqi, 0.5)
        t[idx] = np.clip(t_new, np.minimum(tlim, 0.5), 1.0 - np.minimum(tlim, 0.5))
        active[idx[done]] = False
    return xm


def gmm_quantile(u, m, x0=None, max_newton=60):
    """Mixture quantile: ``z`` with ``gmm_cdf(z, m) = u``, elementwise.

    The bracket ``[min_k q_k(u), max_k q_k(u)]`` built from the component
    quantiles always contains the root. Newton steps that leave the current
    bracket are replaced by bisection; points still unresolved after
    ``max_newton`` steps are finished with :func:`chandrupatla`. An optional
    warm start ``x0`` (same shape as ``u``) is clipped into the bracket.

    Raises
    ------
    DomainError
        If any ``u`` lies outside the open interval (0, 1).
    """
    u_arr = np.asarray(u, dtype=float)
    u_flat = np.atleast_1d(u_arr).ravel()
    x0 = None if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float)).ravel()
    x = _solve_quantiles(u_flat, m.weights, m.means[None], m.sds[None], x0, max_newton)
    return x[0] if u_arr.ndim == 0 else x.reshape(u_arr.shape)


def gmm_quantile_columns(U, weights, means, sds, X0=None, max_newton=60):
    """Quantiles of ``d`` one-dimensional mixtures sharing their weights.

    Column ``j`` of ``U`` (n, d) is inverted through the mixture with
    weights ``weights`` (K,), means ``means[j]`` and sds ``sds[j]`` (d, K).
    All columns are solved in one vectorized pass.
    """
    U = np.asarray(U, dtype=float)
    n, d = U.shape
    col = np.tile(np.arange(d), n)
    x0 = None if X0 is None else np.asarray(X0, dtype=float).ravel()
    x = _solve_quantiles(U.ravel(), np.asarray(weights, dtype=float),
                         np.asarray(means, dtype=float)[col], np.asarray(sds, dtype=float)[col],
                         x0, max_newton)
    return x.reshape(n, d)


def _solve_quantiles(u_flat, W, M, S, x0, max_newton):
    if np.any(~(u_flat > 0) | ~(u_flat < 1)):
        raise DomainError("quantile level must lie strictly inside (0, 1)")
    upper = u_flat > 0.5
    qs = M + S * ndtri(u_flat)[:, None]
    lo = qs.min(axis=1)
    hi = qs.max(axis=1)
    x = qs @ W if x0 is None else x0.copy()
    x = np.clip(x, lo, hi)
    sd_min = np.broadcast_to(S.min(axis=1), x.shape)
    active = np.ones(u_flat.size, dtype=bool)
    for _ in range(max_newton):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xi, ui, up = x[idx], u_flat[idx], upper[idx]
        r, p = _residual(xi, ui, up, W, _rows(M, idx), _rows(S, idx))
        lo_i = np.where(r < 0, xi, lo[idx])
        hi_i = np.where(r > 0, xi, hi[idx])
        exact = r == 0
        lo_i = np.where(exact, xi, lo_i)
        hi_i = np.where(exact, xi, hi_i)
        lo[idx], hi[idx] = lo_i, hi_i
        done = exact | _converged(r, ui, lo_i, hi_i, xi)
        # a vanishing pdf gives an infinite step, caught by the bracket test below
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            step = r / p
            xn = xi - step
        ok = np.isfinite(xn) & (xn > lo_i) & (xn < hi_i)
        xn = np.where(ok, xn, 0.5 * (lo_i + hi_i))
        # a step this small is deep in the quadratic regime: the error left
        # after taking it is of order step**2 / sd_min
        small_step = ok & (np.abs(step) <= 1e-7 * sd_min[idx])
        x[idx] = np.where(done, xi, xn)
        active[idx[done | small_step]] = False
    rest = np.flatnonzero(active)
    if rest.size:
        u_r, up_r = u_flat[rest], upper[rest]
        M_r, S_r = _rows(M, rest), _rows(S, rest)
        lo_r, hi_r = lo[rest], hi[rest]
        # round-off can leave the bracket one ulp short; widen until signs differ
        for _ in range(60):
            bad_lo = _residual(lo_r, u_r, up_r, W, M_r, S_r)[0] > 0
            bad_hi = _residual(hi_r, u_r, up_r, W, M_r, S_r)[0] < 0
            if not (bad_lo.any() or bad_hi.any()):
                break
            span = np.maximum(hi_r - lo_r, sd_min[rest])
            lo_r = np.where(bad_lo, lo_r - span, lo_r)
            hi_r = np.where(bad_hi, hi_r + span, hi_r)

        def f(z, sel):
            return _residual(z, u_r[sel], up_r[sel], W, _rows(M_r, sel), _rows(S_r, sel))[0]

        ftol = 1e-13 * np.minimum(u_r, 1 - u_r)
        x[rest] = chandrupatla(f, lo_r, hi_r, ftol=ftol)
    return x


def pseudo_observations(data):
    """Column-wise ranks divided by ``n + 1`` (average ranks on ties)."""
    X = np.asarray(data, dtype=float)
    one_d = X.ndim == 1
    X = X[:, None] if one_d else X
    n = X.shape[0]
    if n < 2:
        raise DomainError("need at least two observations")
    U = rankdata(X, axis=0, method="average") / (n + 1)
    return U[:, 0] if one_d else U


def fit_marginal_aic(x, k_max=10, rng=None, cfg=None):
    """Fit 1-D Gaussian mixtures with K = 1..k_max and keep the lowest AIC.

    AIC is ``2 p - 2 loglik`` with ``p = 3K - 1``. A K whose fit fails is
    skipped; if every K fails the last error is raised.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 10:
        raise DomainError("need at least 10 observations to fit a marginal")
    rng = np.random.default_rng() if rng is None else rng
    cfg = EmConfig(n_restarts=3, rel_tol=1e-6) if cfg is None else cfg
    best, best_aic, last_err = None, np.inf, None
    for K, child in zip(range(1, k_max + 1), rng.spawn(k_max)):
        try:
            mix, ll = em_fit(x[:, None], K, cfg, child)
        except (EmptyComponent, SingularComponent) as err:
            last_err = err
            continue
        aic = 2 * (3 * K - 1) - 2 * ll
        if aic < best_aic:
            best, best_aic = mix, aic
    if best is None:
        raise last_err
    return UnivariateMixture.from_mixture(best)


@dataclass(frozen=True)
class MarginalModel:
    """Either a parametric Gaussian-mixture margin or an empirical one."""

    kind: str
    gmm: UnivariateMixture = None
    sorted_data: np.ndarray = None

    def __post_init__(self):
        if self.kind == "parametric-gmm":
            if self.gmm is None or self.sorted_data is not None:
                raise DomainError("parametric-gmm marginal needs exactly a gmm payload")
        elif self.kind == "empirical":
            if self.sorted_data is None or self.gmm is not None:
                raise DomainError("empirical marginal needs exactly a sorted_data payload")
            s = np.sort(np.asarray(self.sorted_data, dtype=float).ravel())
            if s.size < 2:
                raise DomainError("empirical marginal needs at least two observations")
            object.__setattr__(self, "sorted_data", s)
        else:
            raise DomainError(f"unknown marginal kind {self.kind!r}")

    @property
    def n(self):
        return None if self.sorted_data is None else self.sorted_data.size

    @classmethod
    def empirical(cls, x):
        return cls("empirical", sorted_data=x)

    @classmethod
    def parametric(cls, gmm):
        return cls("parametric-gmm", gmm=gmm)


def marginal_cdf(x, m):
    """CDF of a marginal model.

    The empirical version is the right-continuous step function scaled by
    ``n / (n + 1)`` so it never reaches 1.
    """
    if m.kind == "parametric-gmm":
        return gmm_cdf(x, m.gmm)
    n = m.sorted_data.size
    return np.searchsorted(m.sorted_data, x, side="right") / (n + 1.0)


def marginal_quantile(u, m):
    """Inverse of :func:`marginal_cdf`.

    For empirical margins the order statistics sit at levels ``i / (n + 1)``
    and are linearly interpolated in between; levels outside
    ``[1/(n+1), n/(n+1)]`` map to the extreme order statistics.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(~(u_arr > 0) | ~(u_arr < 1)):
        raise DomainError("quantile level must lie strictly inside (0, 1)")
    if m.kind == "parametric-gmm":
        return gmm_quantile(u_arr, m.gmm)
    n = m.sorted_data.size
    levels = np.arange(1, n + 1) / (n + 1.0)
    return np.interp(u_arr, levels, m.sorted_data)
