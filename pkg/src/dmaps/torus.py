"""Periodic domain arithmetic and the periodised Gaussian kernel.

The domain is the flat torus ``(R / L Z)^d``.  Points are stored as arrays
whose last axis has length ``d``; a bare scalar is read as a point of a
one-dimensional torus.
"""

from dataclasses import dataclass
import math

import numpy as np

__all__ = [
    "TorusDomain",
    "PeriodizationConstants",
    "wrap",
    "displacement",
    "gaussian",
    "periodized_gaussian",
    "choose_truncation",
    "periodization_constants",
]


@dataclass(frozen=True)
class TorusDomain:
    """The periodic box ``[0, L)^d`` with opposite faces identified."""

    d: int = 1
    L: float = 1.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d!r}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"side length must be positive, got {self.L!r}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "L", float(self.L))

    @property
    def volume(self):
        return self.L ** self.d


@dataclass(frozen=True)
class PeriodizationConstants:
    """Constants bounding the periodised kernel by the plain Gaussian.

    ``gamma`` bounds the peak ratio per axis, ``gamma_prime`` enters the
    Lipschitz bound.  Both are nondecreasing in ``eps``.
    """

    gamma: float
    gamma_prime: float
    eps: float


def _as_points(x):
    x = np.asarray(x, dtype=float)
    return x


def wrap(domain, raw):
    """Reduce coordinates modulo ``L`` into ``[0, L)``."""
    raw = _as_points(raw)
    if not np.all(np.isfinite(raw)):
        raise ValueError("cannot wrap non-finite coordinates")
    out = np.mod(raw, domain.L)
    # np.mod(-tiny, L) rounds to L itself
    out = np.where(out >= domain.L, 0.0, out)
    return out


def displacement(domain, x, y):
    """Shortest periodic representative of ``y - x``.

    Each component lies in ``[-L/2, L/2]``; an exact tie at ``L/2`` is
    resolved to ``+L/2``.  The map is bitwise antisymmetric away from ties.
    """
    x = _as_points(x)
    y = _as_points(y)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite coordinates")
    L = domain.L
    r = y - x
    return r + L * np.floor(0.5 - r / L)


def gaussian(eps, r, d=None):
    """Normalised Gaussian density with covariance ``eps * I``.

    Parameters
    ----------
    eps : float
        Variance (the squared bandwidth).
    r : array_like, shape (..., d)
        Displacements.  A 0-d input is treated as a point in one dimension.
    d : int, optional
        Dimension; inferred from ``r`` when omitted.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    r = np.asarray(r, dtype=float)
    if d is None:
        d = 1 if r.ndim == 0 else r.shape[-1]
    sq = r * r if r.ndim == 0 else np.sum(r * r, axis=-1)
    return (2 * np.pi * eps) ** (-d / 2) * np.exp(-sq / (2 * eps))


def _periodized_axis(eps, r, L, J):
    # images are summed over |r| so that the value is bitwise even in r
    a = np.abs(r)
    total = np.exp(-(a * a) / (2 * eps))
    for j in range(1, J + 1):
        plus = a + L * j
        minus = a - L * j
        total = total + np.exp(-(plus * plus) / (2 * eps)) + np.exp(-(minus * minus) / (2 * eps))
    return total


def periodized_gaussian(domain, eps, r, J):
    """Sum of Gaussian images ``g(r + L j)`` over ``max|j_i| <= J``.

    The cube of image vectors factorises over axes, so the sum is evaluated
    as a product of one-dimensional image sums.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    if J < 0:
        raise ValueError("truncation radius must be nonnegative")
    r = np.asarray(r, dtype=float)
    d = domain.d
    if r.ndim == 0:
        r = r[None]
    if r.shape[-1] != d:
        raise ValueError(f"expected last axis of length {d}, got {r.shape}")
    prod = np.ones(r.shape[:-1])
    for i in range(d):
        prod = prod * _periodized_axis(eps, r[..., i], domain.L, int(J))
    out = (2 * np.pi * eps) ** (-d / 2) * prod
    return out[()] if out.ndim == 0 else out


def _gamma(eps, L, series_tol=1e-18):
    total = 1.0
    j = 1
    while True:
        term = math.exp(-(j * L) ** 2 / (2 * eps))
        total += 2 * term
        if term < series_tol:
            return total
        j += 1


def _gamma_prime(eps, L, series_tol=1e-18):
    total = 0.0
    j = 1
    while True:
        term = (2 * j + 1) * L * eps ** -0.5 * math.exp(-((2 * j - 1) * L) ** 2 / (8 * eps))
        total += term
        if term < series_tol:
            return total
        j += 1


def _tail_bound(eps, L, J, d):
    # Relative bound (in units of (2 pi eps)^{-d/2}) on the images outside the
    # cube, for displacements in [-L/2, L/2]^d.  The nearest omitted image on an
    # axis sits at distance >= L (J + 1/2); further ones decay geometrically.
    lead = math.exp(-(L * (J + 0.5)) ** 2 / (2 * eps))
    ratio = math.exp(-L * L * (J + 1) / eps)
    if ratio >= 1.0:
        return math.inf
    axis_tail = 2 * lead / (1 - ratio)
    return d * axis_tail * _gamma(eps, L) ** (d - 1)


def choose_truncation(domain, eps, tol=1e-15):
    """Smallest image radius ``J`` whose omitted tail is below ``tol``.

    The tail is measured relative to the Gaussian peak ``(2 pi eps)^{-d/2}``
    and bounded with a geometric series per axis.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    if tol >= 1:
        return 0
    J = 0
    while _tail_bound(eps, domain.L, J, domain.d) > tol:
        J += 1
    return J


def periodization_constants(domain, eps, series_tol=1e-18):
    """Evaluate ``gamma`` and ``gamma_prime`` for the periodised kernel.

    >>> round(periodization_constants(TorusDomain(1, 1.0), 0.5).gamma, 4)
    1.7726
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    return PeriodizationConstants(
        gamma=_gamma(eps, domain.L, series_tol),
        gamma_prime=_gamma_prime(eps, domain.L, series_tol),
        eps=float(eps),
    )
