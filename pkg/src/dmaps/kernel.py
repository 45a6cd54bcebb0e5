"""Dense Gaussian kernel matrices ``K_ij = g(x_i - x_j) / M`` and their rows.

Two kernel modes exist: the periodised Gaussian on a torus, and the plain
Gaussian on Euclidean space (used for samples with unbounded support).
Entries are never floored: values that underflow stay exactly zero.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import hashlib
import os
import struct

import numpy as np

from .torus import TorusDomain, choose_truncation, displacement, periodized_gaussian, wrap

__all__ = [
    "KernelMode",
    "periodic",
    "euclidean",
    "KernelMatrix",
    "kernel_values",
    "build_kernel_matrix",
    "apply",
    "out_of_sample_row",
    "cache_key",
    "save_kernel_cache",
    "load_kernel_cache",
    "cached_kernel_matrix",
]

CACHE_MAGIC = b"DMKC"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sIQId")


@dataclass(frozen=True)
class KernelMode:
    """Which Gaussian kernel to use and, on a torus, how many images to sum."""

    kind: str
    d: int
    domain: TorusDomain = None
    truncation: int = None
    tol: float = 1e-15

    def resolve(self, eps):
        """Image radius actually used at ``eps`` (0 in Euclidean mode)."""
        if self.kind == "euclidean":
            return 0
        if self.truncation is not None:
            return int(self.truncation)
        return choose_truncation(self.domain, eps, self.tol)

    def describe(self):
        if self.kind == "euclidean":
            return {"kind": "euclidean", "d": self.d}
        return {"kind": "periodic", "d": self.d, "L": self.domain.L,
                "truncation": self.truncation, "tol": self.tol}


def periodic(domain, truncation=None, tol=1e-15):
    """Periodised Gaussian on ``domain``; ``truncation=None`` picks the image radius from ``tol``."""
    return KernelMode("periodic", domain.d, domain, truncation, tol)


def euclidean(d):
    """Plain Gaussian kernel on ``R^d``."""
    return KernelMode("euclidean", int(d))


def kernel_values(mode, eps, r, J=None):
    """Kernel ``g(r)`` (periodised or plain) at displacements ``r`` of shape ``(..., d)``."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    r = np.asarray(r, dtype=float)
    d = mode.d
    norm = (2 * np.pi * eps) ** (-d / 2)
    if mode.kind == "euclidean":
        return norm * np.exp(-np.sum(r * r, axis=-1) / (2 * eps))
    J = mode.resolve(eps) if J is None else J
    return periodized_gaussian(mode.domain, eps, r, J)


def _pair_displacements(mode, xs, ys):
    # xs: (b, d), ys: (M, d) -> (b, M, d) with r = y - x
    if mode.kind == "euclidean":
        return ys[None, :, :] - xs[:, None, :]
    return displacement(mode.domain, xs[:, None, :], ys[None, :, :])


@dataclass
class KernelMatrix:
    """The symmetric matrix ``K`` together with the data needed to extend it.

    Attributes
    ----------
    entries : ndarray, shape (M, M)
        ``g(x_i - x_j) / M``.
    eps : float
        Kernel variance.
    mode : KernelMode
    points : ndarray, shape (M, d)
        Sample points the matrix was built from.
    truncation : int
        Image radius used (0 in Euclidean mode).
    """

    entries: np.ndarray
    eps: float
    mode: KernelMode
    points: np.ndarray
    truncation: int = 0

    @property
    def M(self):
        return self.entries.shape[0]

    @property
    def shape(self):
        return self.entries.shape

    def __matmul__(self, v):
        return apply(self, v)

    def row_sums(self):
        """Kernel density estimate ``(1/M) sum_j g(x_i - x_j)`` at the sample points."""
        return self.entries.sum(axis=1)

    def rows(self, X):
        """Out-of-sample kernel rows ``g(x - x_i) / M`` for each query point."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.mode.kind == "periodic":
            X = wrap(self.mode.domain, X)
        r = _pair_displacements(self.mode, X, self.points)
        return kernel_values(self.mode, self.eps, r, self.truncation) / self.M


def build_kernel_matrix(sample, eps, mode=None, block_rows=512, n_threads=1):
    """Assemble ``K_ij = g(x_i - x_j) / M``.

    Parameters
    ----------
    sample : Sample or array_like, shape (M, d)
    eps : float
    mode : KernelMode, optional
        Defaults to the periodised kernel on the sample's domain.
    block_rows : int
        Rows assembled per block (bounds temporary memory).
    n_threads : int
        Row blocks are filled concurrently; writes are disjoint.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    points = getattr(sample, "points", sample)
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    M = points.shape[0]
    if M == 0:
        raise ValueError("cannot build a kernel matrix from an empty sample")
    if mode is None:
        domain = getattr(sample, "domain", None)
        if domain is None:
            raise ValueError("a kernel mode is required for a bare point array")
        mode = periodic(domain)
    if points.shape[1] != mode.d:
        raise ValueError(f"points have {points.shape[1]} coordinates, mode expects {mode.d}")
    if mode.kind == "periodic":
        points = wrap(mode.domain, points)
    J = mode.resolve(eps)
    K = np.empty((M, M))

    def fill(i0):
        i1 = min(M, i0 + block_rows)
        r = _pair_displacements(mode, points[i0:i1], points)
        K[i0:i1] = kernel_values(mode, eps, r, J) / M

    starts = range(0, M, block_rows)
    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            list(pool.map(fill, starts))
    else:
        for i0 in starts:
            fill(i0)
    # each pair is taken from the upper triangle so K == K.T bitwise
    iu = np.triu_indices(M, 1)
    K[(iu[1], iu[0])] = K[iu]
    return KernelMatrix(K, float(eps), mode, points, J)


def apply(K, v):
    """Matrix-vector (or matrix-matrix) product with ``K``."""
    entries = K.entries if isinstance(K, KernelMatrix) else np.asarray(K)
    v = np.asarray(v, dtype=float)
    if v.shape[0] != entries.shape[1]:
        raise ValueError(f"dimension mismatch: matrix is {entries.shape}, vector has {v.shape[0]} rows")
    return entries @ v


def out_of_sample_row(sample, eps, mode, x):
    """``r_i = g(x - x_i) / M`` for a single point ``x`` (or one row per point)."""
    points = np.asarray(getattr(sample, "points", sample), dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if mode.kind == "periodic":
        points = wrap(mode.domain, points)
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    X = x.reshape(1, -1) if single else x
    if mode.kind == "periodic":
        X = wrap(mode.domain, X)
    r = _pair_displacements(mode, X, points)
    rows = kernel_values(mode, eps, r, mode.resolve(eps)) / points.shape[0]
    return rows[0] if single else rows


# -- binary cache ----------------------------------------------------------
#
# Layout (little endian): magic b"DMKC", uint32 version, uint64 M, uint32 d,
# float64 eps, then M*M float64 entries in row-major order.

def cache_key(points, eps, mode):
    """Hex digest identifying ``(sample, eps, mode)``."""
    h = hashlib.sha256()
    pts = np.ascontiguousarray(np.asarray(points, dtype="<f8"))
    h.update(pts.tobytes())
    h.update(struct.pack("<d", float(eps)))
    h.update(repr(sorted(mode.describe().items())).encode())
    return h.hexdigest()


def save_kernel_cache(path, K):
    M = K.M
    d = K.points.shape[1]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, M, d, float(K.eps)))
        fh.write(np.ascontiguousarray(K.entries, dtype="<f8").tobytes())


def load_kernel_cache(path):
    """Read ``(M, d, eps, entries)`` from a cache file."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError("truncated kernel cache header")
        magic, version, M, d, eps = _HEADER.unpack(header)
        if magic != CACHE_MAGIC:
            raise ValueError("not a kernel cache file")
        if version != CACHE_VERSION:
            raise ValueError(f"unsupported kernel cache version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != M * M:
        raise ValueError("kernel cache payload has the wrong size")
    return M, d, eps, data.reshape(M, M).astype(float)


def cached_kernel_matrix(sample, eps, mode, cache_dir):
    """Like :func:`build_kernel_matrix`, reusing ``cache_dir/<key>.dmk`` when present."""
    points = np.asarray(getattr(sample, "points", sample), dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if mode.kind == "periodic":
        points = wrap(mode.domain, points)
    path = os.path.join(cache_dir, cache_key(points, eps, mode) + ".dmk")
    if os.path.exists(path):
        M, d, eps_c, entries = load_kernel_cache(path)
        if M == points.shape[0] and d == points.shape[1] and eps_c == eps:
            return KernelMatrix(entries, float(eps), mode, points, mode.resolve(eps))
    K = build_kernel_matrix(points, eps, mode)
    os.makedirs(cache_dir, exist_ok=True)
    save_kernel_cache(path, K)
    return K
