"""
Sample-based proper scoring rules and the energy two-sample distance.

All scores are negatively oriented (lower is better). CRPS and the energy
score use the energy form with the ``1/(2 m^2)`` convention for the
self-pair sum, so ``crps(x, y) == energy_score(x[:, None], [y])`` up to
summation order.
"""

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.special import logsumexp

from .errors import DomainError, UnsupportedShape

_LOG_FLOOR = np.log(1e-300)


def _samples_1d(samples):
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise DomainError("at least two samples are required")
    return x


def _samples_2d(samples, y):
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if X.shape[0] < 2:
        raise DomainError("at least two samples are required")
    if X.shape[1] != y.size:
        raise DomainError(f"sample dimension {X.shape[1]} != outcome dimension {y.size}")
    return X, y


def _mean_abs_pair_sum(x):
    # sum_{i,j} |x_i - x_j| in O(m log m) via order statistics
    s = np.sort(x)
    m = s.size
    # coefficients sum to zero; shifting by s[0] makes constant input exactly zero
    return 2.0 * np.dot(2.0 * np.arange(1, m + 1) - m - 1, s - s[0])


def crps(samples, y):
    """Continuous ranked probability score of an ensemble at outcome ``y``.

    ``(1/m) sum |x_i - y| - (1/(2 m^2)) sum_{i,j} |x_i - x_j|``.

    Examples
    --------
    >>> crps([0.0, 2.0], 1.0)
    0.5
    """
    x = _samples_1d(samples)
    m = x.size
    return float(np.mean(np.abs(x - float(y))) - _mean_abs_pair_sum(x) / (2.0 * m * m))


def log_score_kde(samples, y, bandwidth=0.5):
    """Negative log of a Gaussian KDE of ``samples`` evaluated at ``y``.

    The density is floored at 1e-300 before taking the log.
    """
    x = _samples_1d(samples)
    if bandwidth <= 0:
        raise DomainError("bandwidth must be positive")
    t = (float(y) - x) / bandwidth
    logdens = logsumexp(-0.5 * t * t) - np.log(x.size) - np.log(bandwidth * np.sqrt(2 * np.pi))
    return float(-max(logdens, _LOG_FLOOR))


def energy_score(samples, y):
    """Energy score ``(1/m) sum ||x_i - y|| - (1/(2 m^2)) sum_{i,j} ||x_i - x_j||``."""
    X, y = _samples_2d(samples, y)
    m = X.shape[0]
    if X.shape[1] == 1:
        return crps(X[:, 0], y[0])
    first = np.mean(np.linalg.norm(X - y, axis=1))
    # pdist lists each unordered pair once
    return float(first - 2.0 * np.sum(pdist(X)) / (2.0 * m * m))


def variogram_score(samples, y, r=0.5, weights=None):
    """Variogram score of order ``r``.

    ``sum_{i<j} w_ij (|y_i - y_j|^r - (1/m) sum_k |x_ki - x_kj|^r)^2`` with
    unit weights by default.
    """
    X, y = _samples_2d(samples, y)
    ell = X.shape[1]
    if ell < 2:
        raise UnsupportedShape("variogram score needs at least two target dimensions")
    W = np.ones((ell, ell)) if weights is None else np.asarray(weights, dtype=float)
    if W.shape != (ell, ell):
        raise DomainError(f"weights must be {ell}x{ell}")
    i, j = np.triu_indices(ell, k=1)
    vy = np.abs(y[i] - y[j]) ** r
    # averaging the differences keeps a perfect forecast at exactly zero
    gap = np.mean(vy - np.abs(X[:, i] - X[:, j]) ** r, axis=0)
    return float(np.sum(W[i, j] * gap ** 2))


def energy_distance(A, B):
    """Energy distance ``2 E||a - b|| - E||a - a'|| - E||b - b'||``.

    Within-sample means exclude self-pairs (U-statistic form). The result
    is exactly symmetric in its arguments.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    A = A[:, None] if A.ndim == 1 else A
    B = B[:, None] if B.ndim == 1 else B
    if A.shape[0] < 2 or B.shape[0] < 2:
        raise DomainError("energy distance needs at least two points per sample")
    if A.shape[1] != B.shape[1]:
        raise DomainError("samples have different dimensions")
    # a + b == b + a in floating point, which makes the result symmetric
    cross = cdist(A, B).mean() + cdist(B, A).mean()
    within = pdist(A).mean() + pdist(B).mean()
    return float(cross - within)
