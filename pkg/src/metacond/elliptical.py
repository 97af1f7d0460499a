"""
Multivariate Student-t and unified skew-normal (SUN) families.

Both are closed under marginalization and conditioning. For the Student-t,
conditioning on ``m`` coordinates raises the degrees of freedom to ``nu + m``
and rescales the Schur complement by ``(nu + q) / (nu + m)``, where ``q`` is
the Mahalanobis distance of the conditioning values.

A SUN vector is ``Y = xi + omega Z`` with ``Z = (U1 | U0 + gamma > 0)`` and
``(U0, U1) ~ N(0, Omega*)``; ``Omega*`` has blocks ``Gamma`` (p x p),
``Delta`` (d x p) and ``Omega_bar`` (d x d). Conditioning keeps ``omega``
and does not renormalize the blocks to correlation form.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, ndtr
from scipy.stats import t as student_t

from .errors import DomainError
from .gaussian import GaussianParams, _check_keep, cholesky, gaussian_condition, mvn_logpdf


class LowAcceptance(UserWarning):
    """Rejection sampler acceptance rate fell below 1e-4."""


@dataclass(frozen=True)
class StudentTParams:
    """Location ``mean``, PD scale matrix ``scale`` and degrees of freedom ``dof``."""

    mean: np.ndarray
    scale: np.ndarray
    dof: float

    def __post_init__(self):
        g = GaussianParams(self.mean, self.scale)
        if not self.dof > 0:
            raise DomainError("degrees of freedom must be positive")
        object.__setattr__(self, "mean", g.mean)
        object.__setattr__(self, "scale", g.cov)
        object.__setattr__(self, "dof", float(self.dof))

    @property
    def dim(self):
        return self.mean.size


def t_logpdf(x, p):
    """Log-density of ``t_d(mean, scale, dof)`` at a point or batch of points."""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    X = x.reshape(1, -1) if single else x
    if X.shape[1] != p.dim:
        raise DomainError(f"point dimension {X.shape[1]} != distribution dimension {p.dim}")
    d, nu = p.dim, p.dof
    L = cholesky(p.scale)
    r = solve_triangular(L, (X - p.mean).T, lower=True)
    q = np.sum(r * r, axis=0)
    out = (gammaln(0.5 * (nu + d)) - gammaln(0.5 * nu) - 0.5 * d * np.log(nu * np.pi)
           - np.sum(np.log(np.diag(L))) - 0.5 * (nu + d) * np.log1p(q / nu))
    return out[0] if single else out


def t_marginalize(p, keep):
    keep = _check_keep(keep, p.dim)
    return StudentTParams(p.mean[keep], p.scale[np.ix_(keep, keep)], p.dof)


def t_condition(p, split, x_given):
    """Conditional Student-t of ``split.target`` given ``split.given``."""
    x_given = np.atleast_1d(np.asarray(x_given, dtype=float))
    split.validate(p.dim)
    if not split.given:
        return t_marginalize(p, split.target)
    g = gaussian_condition(GaussianParams(p.mean, p.scale), split, x_given)
    given = list(split.given)
    L = cholesky(p.scale[np.ix_(given, given)])
    r = solve_triangular(L, x_given - p.mean[given], lower=True)
    q = float(r @ r)
    m = len(given)
    return StudentTParams(g.mean, (p.dof + q) / (p.dof + m) * g.cov, p.dof + m)


def t_sample(p, n, rng):
    """Draws ``mean + Y / sqrt(W / dof)`` with ``Y ~ N(0, scale)``, ``W ~ chi2(dof)``."""
    if n < 1:
        raise DomainError("n must be at least 1")
    L = cholesky(p.scale)
    y = rng.standard_normal((n, p.dim)) @ L.T
    w = rng.chisquare(p.dof, size=n)
    return p.mean + y / np.sqrt(w / p.dof)[:, None]


def t_cdf_1d(x, p):
    """CDF of a univariate :class:`StudentTParams`."""
    if p.dim != 1:
        raise DomainError("t_cdf_1d needs a univariate distribution")
    return student_t.cdf(x, p.dof, loc=p.mean[0], scale=np.sqrt(p.scale[0, 0]))


# ---------------------------------------------------------------------------
# unified skew-normal
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SunParams:
    """Parameters of ``SUN_{d,p}(xi, gamma, omega_bar, omega_star)``.

    ``omega_star`` is the (p + d) x (p + d) covariance of ``(U0, U1)``, with
    the p selection coordinates first.
    """

    xi: np.ndarray
    gamma: np.ndarray
    omega_bar: np.ndarray
    omega_star: np.ndarray

    def __post_init__(self):
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        om = np.atleast_1d(np.asarray(self.omega_bar, dtype=float))
        S = np.atleast_2d(np.asarray(self.omega_star, dtype=float))
        d, p = xi.size, gamma.size
        if om.shape != (d,) or S.shape != (p + d, p + d):
            raise DomainError("inconsistent SUN parameter shapes")
        if np.any(om <= 0):
            raise DomainError("omega_bar must be positive")
        GaussianParams(np.zeros(p + d), S)
        cholesky(S)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "omega_bar", om)
        object.__setattr__(self, "omega_star", S)

    @property
    def dim(self):
        return self.xi.size

    @property
    def p(self):
        return self.gamma.size

    @property
    def Gamma(self):
        return self.omega_star[:self.p, :self.p]

    @property
    def Delta(self):
        return self.omega_star[self.p:, :self.p]

    @property
    def Omega_bar(self):
        return self.omega_star[self.p:, self.p:]

    @property
    def Omega(self):
        return self.Omega_bar * np.outer(self.omega_bar, self.omega_bar)

    @classmethod
    def from_blocks(cls, xi, gamma, omega_bar, Gamma, Delta, Omega_bar):
        Gamma = np.atleast_2d(Gamma)
        Delta = np.atleast_2d(np.asarray(Delta, dtype=float))
        top = np.hstack([Gamma, Delta.T])
        bottom = np.hstack([Delta, np.atleast_2d(Omega_bar)])
        return cls(xi, gamma, omega_bar, np.vstack([top, bottom]))


def sun_marginalize(p, keep):
    keep = _check_keep(keep, p.dim)
    return SunParams.from_blocks(p.xi[keep], p.gamma, p.omega_bar[keep], p.Gamma,
                                 p.Delta[keep], p.Omega_bar[np.ix_(keep, keep)])


def sun_condition(p, split, x_given):
    """Conditional SUN of ``split.target`` given ``split.given``."""
    x_given = np.atleast_1d(np.asarray(x_given, dtype=float))
    split.validate(p.dim)
    if not split.given:
        return sun_marginalize(p, split.target)
    t, g = list(split.target), list(split.given)
    Ob = p.Omega_bar
    O11, O12, O22 = Ob[np.ix_(t, t)], Ob[np.ix_(t, g)], Ob[np.ix_(g, g)]
    D1, D2 = p.Delta[t], p.Delta[g]
    L = cholesky(O22)
    z2 = (x_given - p.xi[g]) / p.omega_bar[g]
    A = solve_triangular(L, O12.T, lower=True)   # L^{-1} O21
    B = solve_triangular(L, D2, lower=True)      # L^{-1} D2
    r = solve_triangular(L, z2, lower=True)      # L^{-1} z2
    xi = p.xi[t] + p.omega_bar[t] * (A.T @ r)
    gamma = p.gamma + B.T @ r
    Gamma = p.Gamma - B.T @ B
    Delta = D1 - A.T @ B
    Omega_bar = O11 - A.T @ A
    return SunParams.from_blocks(xi, gamma, p.omega_bar[t], 0.5 * (Gamma + Gamma.T), Delta,
                                 0.5 * (Omega_bar + Omega_bar.T))


def _orthant_prob(a, cov, n_mc, rng):
    # P(W <= a) for W ~ N(0, cov); exact when p == 1
    a = np.atleast_1d(a)
    if a.size == 1:
        return float(ndtr(a[0] / np.sqrt(cov[0, 0]))), 0.0
    W = rng.standard_normal((n_mc, a.size)) @ cholesky(cov).T
    hits = np.all(W <= a, axis=1)
    prob = hits.mean()
    return float(prob), float(np.sqrt(prob * (1 - prob) / n_mc))


def sun_logpdf_mc(x, p, n_mc=10000, rng=None):
    """Log-density of a SUN with Monte Carlo orthant probabilities.

    Returns
    -------
    logpdf : float
    stderr : float
        Delta-method standard error of ``logpdf``; zero when ``p == 1``.
    """
    if n_mc < 1000:
        raise DomainError("n_mc must be at least 1000")
    rng = np.random.default_rng() if rng is None else rng
    x = np.atleast_1d(np.asarray(x, dtype=float))
    Ob = p.Omega_bar
    L = cholesky(Ob)
    B = solve_triangular(L, p.Delta, lower=True)
    r = solve_triangular(L, (x - p.xi) / p.omega_bar, lower=True)
    num, se_num = _orthant_prob(p.gamma + B.T @ r, p.Gamma - B.T @ B, n_mc, rng)
    den, se_den = _orthant_prob(p.gamma, p.Gamma, n_mc, rng)
    base = mvn_logpdf(x, GaussianParams(p.xi, p.Omega))
    with np.errstate(divide="ignore"):
        logpdf = base + np.log(num) - np.log(den)
    if num > 0 and den > 0:
        se = np.sqrt((se_num / num) ** 2 + (se_den / den) ** 2)
    else:
        se = np.inf if (se_num or se_den) else 0.0
    return float(logpdf), float(se)


def sun_sample(p, n, rng, return_rate=False, max_draws=50_000_000):
    """Rejection sampling from the stochastic representation.

    Draws ``(U0, U1) ~ N(0, Omega*)`` in batches and keeps ``xi + omega U1``
    whenever ``U0 + gamma > 0`` componentwise. Emits :class:`LowAcceptance`
    when the acceptance rate is below 1e-4.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    L = cholesky(p.omega_star)
    kept, accepted, drawn = [], 0, 0
    batch = max(1024, 2 * n)
    while accepted < n:
        if drawn >= max_draws:
            raise DomainError(f"SUN rejection sampler exceeded {max_draws} draws")
        U = rng.standard_normal((batch, p.p + p.dim)) @ L.T
        ok = np.all(U[:, :p.p] + p.gamma > 0, axis=1)
        kept.append(U[ok, p.p:])
        accepted += int(ok.sum())
        drawn += batch
        rate = accepted / drawn
        need = n - accepted
        batch = int(min(max(1024, 1.2 * need / max(rate, 1e-6)), 5_000_000))
    rate = accepted / drawn
    if rate < 1e-4:
        warnings.warn(f"SUN acceptance rate {rate:.2e} below 1e-4", LowAcceptance, stacklevel=2)
    Z = np.vstack(kept)[:n]
    Y = p.xi + Z * p.omega_bar
    return (Y, rate) if return_rate else Y
