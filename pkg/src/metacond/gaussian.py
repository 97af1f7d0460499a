"""
Dense Gaussian kernel: Cholesky, log-density, marginalization, conditioning.

Every covariance solve goes through a Cholesky factor, and log-determinants
are computed as ``2 * sum(log(diag(L)))``. Index splits are handled by
permuting the variables once so that the block formulas can work on
contiguous blocks.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DomainError, NotPositiveDefinite

_LOG_2PI = np.log(2.0 * np.pi)
_PIVOT_FLOOR = 1e-300


@dataclass(frozen=True)
class GaussianParams:
    """Mean vector and covariance matrix of a multivariate normal.

    Parameters
    ----------
    mean : array_like, shape (d,)
    cov : array_like, shape (d, d)
        Symmetric positive-definite covariance.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise DomainError(
                f"mean of shape {mean.shape} incompatible with cov of shape {cov.shape}")
        scale = max(np.max(np.abs(cov)), 1e-300)
        if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
            raise DomainError("covariance matrix is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.size


@dataclass(frozen=True)
class IndexSplit:
    """Target and conditioning index sets for a conditional distribution.

    Both index vectors are strictly increasing and disjoint. ``given`` may be
    empty, in which case conditioning reduces to marginalization.
    """

    target: tuple
    given: tuple

    def __post_init__(self):
        target = tuple(int(i) for i in np.atleast_1d(self.target))
        given = tuple(int(i) for i in np.atleast_1d(self.given)) if np.size(self.given) else ()
        if not target:
            raise DomainError("target index set is empty")
        for name, idx in (("target", target), ("given", given)):
            if any(b <= a for a, b in zip(idx, idx[1:])):
                raise DomainError(f"{name} indices must be strictly increasing: {idx}")
            if idx and idx[0] < 0:
                raise DomainError(f"negative index in {name}: {idx}")
        if set(target) & set(given):
            raise DomainError("target and given index sets overlap")
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "given", given)

    def validate(self, d):
        if max(self.target + self.given) >= d:
            raise DomainError(f"index split {self} out of range for dimension {d}")

    @classmethod
    def complement(cls, given, d):
        """Split whose target is every index not in ``given``."""
        given = tuple(sorted(int(i) for i in np.atleast_1d(given))) if np.size(given) else ()
        return cls(tuple(i for i in range(d) if i not in given), given)


def cholesky(m, ridge=0.0):
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Parameters
    ----------
    m : array_like, shape (d, d)
    ridge : float, default 0
        Opt-in diagonal loading added before factorizing.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is not above 1e-300.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise DomainError(f"matrix must be square, got {m.shape}")
    if ridge:
        m = m + ridge * np.eye(m.shape[0])
    try:
        L = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    piv = np.diag(L) ** 2
    if not np.all(np.isfinite(L)) or np.any(piv <= _PIVOT_FLOOR):
        raise NotPositiveDefinite("Cholesky pivot not above 1e-300")
    return L


def mvn_logpdf(x, p, chol=None):
    """Log-density of ``N(p.mean, p.cov)``.

    ``x`` may be a single point of shape (d,) or a batch of shape (n, d); the
    result is a scalar or an array of shape (n,) accordingly. A precomputed
    Cholesky factor of ``p.cov`` can be passed as ``chol``.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    X = np.atleast_2d(x) if x.ndim else x.reshape(1, 1)
    if X.shape[1] != p.dim:
        raise DomainError(f"point dimension {X.shape[1]} != distribution dimension {p.dim}")
    L = cholesky(p.cov) if chol is None else chol
    sol = solve_triangular(L, (X - p.mean).T, lower=True)
    maha = np.sum(sol ** 2, axis=0)
    out = -0.5 * (p.dim * _LOG_2PI + maha) - np.sum(np.log(np.diag(L)))
    return out[0] if single else out


def _blocks(p, split):
    split.validate(p.dim)
    t, g = list(split.target), list(split.given)
    perm = t + g
    mu = p.mean[perm]
    S = p.cov[np.ix_(perm, perm)]
    nt = len(t)
    return mu[:nt], mu[nt:], S[:nt, :nt], S[:nt, nt:], S[nt:, nt:]


def gaussian_condition(p, split, x_given, ridge=0.0):
    """Conditional law of the ``split.target`` block given ``split.given``.

    Returns ``N(mu1 + S12 S22^{-1} (x2 - mu2), S11 - S12 S22^{-1} S21)`` with
    the target coordinates in their original (increasing) order.
    """
    x_given = np.atleast_1d(np.asarray(x_given, dtype=float))
    if x_given.size != len(split.given):
        raise DomainError(
            f"{x_given.size} conditioning values for {len(split.given)} given indices")
    mu1, mu2, S11, S12, S22 = _blocks(p, split)
    if not split.given:
        return GaussianParams(mu1, S11)
    L = cholesky(S22, ridge=ridge)
    # A = L^{-1} S21, so S12 S22^{-1} S21 = A^T A
    A = solve_triangular(L, S12.T, lower=True)
    r = solve_triangular(L, x_given - mu2, lower=True)
    mean = mu1 + A.T @ r
    cov = S11 - A.T @ A
    return GaussianParams(mean, 0.5 * (cov + cov.T))


def gaussian_marginalize(p, keep):
    """Marginal law of the coordinates listed in ``keep``."""
    keep = _check_keep(keep, p.dim)
    return GaussianParams(p.mean[keep], p.cov[np.ix_(keep, keep)])


def _check_keep(keep, d):
    keep = [int(i) for i in np.atleast_1d(keep)]
    if not keep:
        raise DomainError("keep index set is empty")
    if any(b <= a for a, b in zip(keep, keep[1:])):
        raise DomainError(f"keep indices must be strictly increasing: {keep}")
    if keep[0] < 0 or keep[-1] >= d:
        raise DomainError(f"keep indices {keep} out of range for dimension {d}")
    return keep


def gaussian_sample(p, n, rng):
    """Draw ``n`` rows ``mean + L z`` with ``z`` standard normal."""
    if n < 1:
        raise DomainError("n must be at least 1")
    L = cholesky(p.cov)
    z = rng.standard_normal((n, p.dim))
    return p.mean + z @ L.T
