"""Fourier-spectral reference eigendata on the one-dimensional torus.

Two kinds of reference are provided.

* The limiting generator ``L_alpha phi = 1/2 phi'' + (1 - alpha) (log rho)' phi'``
  (``alpha = 1/2`` is the Langevin generator).  It is solved by a Galerkin
  method in divergence form, ``-L_alpha = -1/2 w^{-1} (w phi')'`` with
  ``w = rho^{2 - 2 alpha}``, which gives a symmetric generalised eigenproblem
  in the Fourier basis.
* The continuum finite-``eps`` operators obtained in the infinite-data limit,
  discretised by collocation on a uniform grid with the Gaussian convolution
  applied spectrally.

Separable densities on higher-dimensional tori are handled by tensor
products of one-dimensional eigendata.
"""

from dataclasses import dataclass, field
import itertools
import json

import numpy as np
from scipy import linalg

from .errors import NumericalFailureError, ResolutionError
from .normalization import assa
from .spectral import cluster_values

__all__ = [
    "FourierOperator",
    "ReferenceEigendata",
    "TensorReference",
    "ContinuumOperator",
    "convolution_operator",
    "multiplication_operator",
    "generator_matrix",
    "continuum_operator",
    "reference_eigendata",
    "tensor_reference",
    "trig_interpolate",
]

DEFAULT_MODES = 2001
DEFAULT_GRID = 2048
DRIFT_DECAY_TOL = 1e-12


def _half(n_modes):
    if n_modes < 1 or n_modes % 2 == 0:
        raise ValueError(f"the number of Fourier modes must be odd, got {n_modes}")
    return n_modes // 2


def _drift_coefficient(kind, alpha):
    if kind == "langevin":
        return 0.5, 0.5
    if kind == "standard":
        if alpha is None or not 0.0 <= alpha <= 1.0:
            raise ValueError("standard kind needs alpha in [0, 1]")
        return 1.0 - alpha, float(alpha)
    raise ValueError(f"unknown generator kind {kind!r}")


@dataclass
class FourierOperator:
    """Matrix of an operator in the basis ``exp(2 pi i k x / L)``, ``|k| <= m``."""

    n_modes: int
    matrix: np.ndarray
    descriptor: str
    L: float = 1.0

    @property
    def wavenumbers(self):
        m = self.n_modes // 2
        return np.arange(-m, m + 1)


def convolution_operator(eps, n_modes, L=1.0):
    """Gaussian convolution, diagonal with entries ``exp(-eps (2 pi k / L)^2 / 2)``."""
    m = _half(n_modes)
    k = np.arange(-m, m + 1)
    return FourierOperator(n_modes, np.diag(np.exp(-eps * (2 * np.pi * k / L) ** 2 / 2)),
                           "convolution", L)


def multiplication_operator(coefficients, n_modes, L=1.0):
    """Multiplication by ``f`` given its coefficients ``f_k`` for ``|k| <= 2m`` (Toeplitz)."""
    m = _half(n_modes)
    c = np.asarray(coefficients)
    mc = (c.size - 1) // 2
    if mc < 2 * m:
        raise ValueError(f"need coefficients up to |k| = {2 * m}")
    k = np.arange(-m, m + 1)
    return FourierOperator(n_modes, c[mc + k[:, None] - k[None, :]], "multiplication", L)


def _fft_coefficients(values, m):
    """Coefficients ``k = -m..m`` of periodic samples (requires ``len(values) > 2m``)."""
    n = values.shape[0]
    c = np.fft.fft(values) / n
    return np.concatenate([c[n - m:], c[: m + 1]])


def _pow2_at_least(n):
    p = 1
    while p < n:
        p *= 2
    return p


def generator_matrix(density, n_modes=DEFAULT_MODES, kind="langevin", alpha=None):
    """Drift-form matrix of ``L_alpha`` in the Fourier basis.

    Diagonal ``-1/2 (2 pi k / L)^2`` plus ``c (b_{k-l}) (2 pi i l / L)``, where
    ``b = (log rho)'`` and ``c = 1 - alpha`` (``1/2`` for ``kind="langevin"``).

    Raises
    ------
    ResolutionError
        If the Fourier coefficients of ``(log rho)'`` beyond ``|k| = m`` are
        not below ``1e-12`` (relative to the largest one).
    """
    m = _half(n_modes)
    c_drift, _ = _drift_coefficient(kind, alpha)
    L = density.L
    N = max(4096, _pow2_at_least(8 * m + 2))
    x = np.arange(N) * (L / N)
    b = np.fft.fft(density.dlogpdf1(x)) / N
    scale = max(1.0, float(np.max(np.abs(b))))
    kk = np.fft.fftfreq(N, 1.0 / N)
    tail = np.max(np.abs(b[np.abs(kk) > m]), initial=0.0)
    if tail > DRIFT_DECAY_TOL * scale:
        raise ResolutionError(
            f"Fourier coefficients of (log rho)' are {tail:.2e} beyond |k| = {m}; "
            "the drift is not resolved")
    bc = np.concatenate([b[N - 2 * m:], b[: 2 * m + 1]])
    k = np.arange(-m, m + 1)
    D = 2j * np.pi * k / L
    A = np.diag(-0.5 * (2 * np.pi * k / L) ** 2).astype(complex)
    A += c_drift * bc[2 * m + k[:, None] - k[None, :]] * D[None, :]
    return FourierOperator(n_modes, A, f"generator:{kind}", L)


def _weight_coefficients(density, alpha, m):
    # Fourier coefficients of w = rho^(2 - 2 alpha) for |k| <= 2m
    p = 2.0 - 2.0 * alpha
    if p == 0.0:
        out = np.zeros(4 * m + 1, dtype=complex)
        out[2 * m] = 1.0
        return out
    if p == 1.0:
        return density.fourier_coefficients(2 * m)
    N = max(4096, _pow2_at_least(8 * m + 2))
    x = np.arange(N) * (density.L / N)
    return _fft_coefficients(density.pdf1(x) ** p, 2 * m)


def _to_real_basis(A, m):
    """``Q^H A Q`` for the real basis ``[1, cos_1..cos_m, sin_1..sin_m]``."""
    r2 = np.sqrt(2.0)
    pos = slice(m + 1, 2 * m + 1)
    neg = slice(m - 1, None, -1) if m > 0 else slice(0, 0)
    AQ = np.concatenate([
        A[:, m:m + 1],
        (A[:, pos] + A[:, neg]) / r2,
        -1j * (A[:, pos] - A[:, neg]) / r2,
    ], axis=1)
    R = np.concatenate([
        AQ[m:m + 1, :],
        (AQ[pos, :] + AQ[neg, :]) / r2,
        1j * (AQ[pos, :] - AQ[neg, :]) / r2,
    ], axis=0).real
    return 0.5 * (R + R.T)


def _from_real_basis(Y, m):
    """Exponential-basis coefficients (rows ``k = -m..m``) from real-basis ones."""
    r2 = np.sqrt(2.0)
    a = np.zeros((2 * m + 1, Y.shape[1]), dtype=complex)
    a[m] = Y[0]
    yc, ys = Y[1:m + 1], Y[m + 1:]
    a[m + 1:] = (yc - 1j * ys) / r2
    a[:m][::-1] = (yc + 1j * ys) / r2
    return a


def _coefficients_to_grid(a, n_grid):
    m = (a.shape[0] - 1) // 2
    if n_grid <= 2 * m:
        raise ValueError("grid too coarse for the coefficients")
    full = np.zeros((n_grid, a.shape[1]), dtype=complex)
    full[: m + 1] = a[m:]
    if m:
        full[n_grid - m:] = a[:m]
    return (np.fft.ifft(full, axis=0) * n_grid).real


def trig_interpolate(values, L, x):
    """Evaluate the trigonometric interpolant of grid samples at points ``x``.

    Parameters
    ----------
    values : ndarray, shape (n,) or (n, k)
        Samples at ``x_j = j L / n``.
    L : float
    x : array_like, shape (N,)
    """
    values = np.asarray(values, dtype=float)
    squeeze = values.ndim == 1
    V = values[:, None] if squeeze else values
    n = V.shape[0]
    c = np.fft.fft(V, axis=0) / n
    x = np.asarray(x, dtype=float).ravel()
    half = (n - 1) // 2
    ks = np.arange(1, half + 1)
    out = np.empty((x.size, V.shape[1]))
    for start in range(0, x.size, 512):
        theta = 2 * np.pi * x[start:start + 512, None] / L
        E = np.exp(1j * theta * ks[None, :])
        block = c[0].real[None, :] + 2 * (E @ c[1:half + 1]).real
        if n % 2 == 0:
            block += np.cos(theta * (n // 2)) * c[n // 2].real[None, :]
        out[start:start + 512] = block
    return out[:, 0] if squeeze else out


def _fix_signs(F):
    idx = np.argmax(np.abs(F), axis=0)
    sg = np.sign(F[idx, np.arange(F.shape[1])])
    sg[sg == 0] = 1.0
    return F * sg


def _complete_count(values, k, rtol=1e-7):
    """Smallest count >= k ending on a cluster boundary, or ``None``."""
    clusters = cluster_values(values, rtol)
    for c in clusters:
        if c[-1] >= k - 1:
            return c[-1] + 1 if c[-1] + 1 < len(values) else None
    return None


@dataclass
class ReferenceEigendata:
    """Reference eigenvalues (generator convention, ascending) and eigenfunctions.

    Attributes
    ----------
    eigenvalues : ndarray
    multiplicities : list of int
        Sizes of the eigenvalue clusters.
    grid : ndarray
        Uniform grid ``j L / n``.
    eigenfunctions : ndarray, shape (n, k)
        Eigenfunction values on ``grid``.
    L : float
    provenance : dict
    """

    eigenvalues: np.ndarray
    multiplicities: list
    grid: np.ndarray
    eigenfunctions: np.ndarray
    L: float
    provenance: dict = field(default_factory=dict)

    @property
    def d(self):
        return 1

    def evaluate(self, x):
        """Eigenfunctions at arbitrary points, shape ``(N, k)``."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            x = x[:, 0]
        return trig_interpolate(self.eigenfunctions, self.L, x)

    def to_dict(self, include_functions=False):
        doc = {
            "provenance": self.provenance,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "multiplicities": [int(v) for v in self.multiplicities],
        }
        if include_functions:
            doc["grid"] = [float(v) for v in self.grid]
            doc["eigenfunctions"] = [[float(v) for v in col] for col in self.eigenfunctions.T]
        return doc

    def to_json(self, include_functions=False):
        return json.dumps(self.to_dict(include_functions), indent=1)


def _generator_eigendata(density, k, kind, alpha, n_modes, n_grid):
    m = _half(n_modes)
    _, alpha_eff = _drift_coefficient(kind, alpha)
    L = density.L
    w = _weight_coefficients(density, alpha_eff, m)
    kk = np.arange(-m, m + 1)
    T = w[2 * m + kk[:, None] - kk[None, :]]
    D = 2 * np.pi * kk / L
    A = 0.5 * D[:, None] * T * D[None, :]
    Ar = _to_real_basis(A, m)
    Br = _to_real_basis(T, m)
    want = min(n_modes, k + 3)
    vals, Y = linalg.eigh(Ar, Br, subset_by_index=[0, want - 1])
    count = _complete_count(vals, k) if want < n_modes else want
    if count is None:
        vals, Y = linalg.eigh(Ar, Br, subset_by_index=[0, min(n_modes, want + 8) - 1])
        count = _complete_count(vals, k) or vals.size
    vals, Y = vals[:count], Y[:, :count]
    a = _from_real_basis(Y, m)
    n_grid = n_grid or max(DEFAULT_GRID, _pow2_at_least(n_modes + 1))
    F = _fix_signs(_coefficients_to_grid(a, n_grid))
    grid = np.arange(n_grid) * (L / n_grid)
    return vals, grid, F, n_grid


@dataclass
class ContinuumOperator:
    """Collocation matrix of a continuum finite-``eps`` Markov operator.

    ``P = diag(V) C diag(rho U)`` on the grid, with ``C`` the spectral Gaussian
    convolution (quadrature weight included); ``V = U`` for Sinkhorn.
    ``S = diag(s) P diag(s)^{-1}`` is the symmetric conjugate.
    """

    eps: float
    kind: str
    alpha: float
    grid: np.ndarray
    rho: np.ndarray
    C: np.ndarray
    U: np.ndarray
    V: np.ndarray
    P: np.ndarray
    S: np.ndarray
    s: np.ndarray
    report: object = None


def _band_limited_density(density, n_grid):
    m = (n_grid - 1) // 2
    c = density.fourier_coefficients(m)
    rho = _coefficients_to_grid(c[:, None], n_grid)[:, 0]
    if np.min(rho) <= 0:
        raise ResolutionError("band-limited density is not positive on the grid")
    return rho


def _circulant_convolution(eps, n_grid, L):
    freqs = np.fft.fftfreq(n_grid, 1.0 / n_grid)
    mult = np.exp(-eps * (2 * np.pi * freqs / L) ** 2 / 2)
    col = np.fft.ifft(mult).real
    C = linalg.circulant(col)
    iu = np.triu_indices(n_grid, 1)
    C[(iu[1], iu[0])] = C[iu]
    return C


def continuum_operator(density, eps, n_grid=DEFAULT_GRID, kind="sinkhorn", alpha=None):
    """Continuum Markov operator at bandwidth ``eps`` on ``n_grid`` collocation points.

    Parameters
    ----------
    density : one-dimensional density
    eps : float
    n_grid : int
    kind : {"sinkhorn", "standard"}
    alpha : float, required for ``kind="standard"``

    Returns
    -------
    ContinuumOperator

    Raises
    ------
    NumericalFailureError
        If the Sinkhorn solve on the continuum operator does not converge.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    L = density.L
    grid = np.arange(n_grid) * (L / n_grid)
    rho = _band_limited_density(density, n_grid)
    C = _circulant_convolution(eps, n_grid, L)
    Kc = C * rho[None, :]
    report = None
    if kind == "sinkhorn":
        w, report = assa(Kc)
        if not report.converged:
            raise NumericalFailureError(
                f"Sinkhorn solve on the continuum operator did not converge "
                f"(residual {report.residual_trace[-1]:.2e})")
        U = V = w.u
        a = np.sqrt(rho) * U
    elif kind == "standard":
        if alpha is None or not 0.0 <= alpha <= 1.0:
            raise ValueError("standard kind needs alpha in [0, 1]")
        U = (Kc @ np.ones(n_grid)) ** -alpha
        V = 1.0 / (Kc @ U)
        a = np.sqrt(rho * U * V)
    else:
        raise ValueError(f"unknown normalization kind {kind!r}")
    P = V[:, None] * Kc * U[None, :]
    S = a[:, None] * C * a[None, :]
    iu = np.triu_indices(n_grid, 1)
    S[(iu[1], iu[0])] = S[iu]
    s = np.sqrt(rho * U / V)
    return ContinuumOperator(float(eps), kind, alpha, grid, rho, C, U, V, P, S, s, report)


def _continuum_eigendata(density, k, eps, kind, alpha, n_grid):
    op = continuum_operator(density, eps, n_grid, kind, alpha)
    want = min(n_grid, k + 3)
    mu, W = linalg.eigh(op.S, subset_by_index=[n_grid - want, n_grid - 1])
    mu, W = mu[::-1], W[:, ::-1]
    lam = -np.log(np.clip(mu, np.finfo(float).tiny, None)) / eps
    count = _complete_count(lam, k) or want
    lam, W = lam[:count], W[:, :count]
    h = density.L / n_grid
    F = _fix_signs(W / (op.s[:, None] * np.sqrt(h)))
    return lam, op.grid, F, n_grid


def reference_eigendata(density, k, source="generator", kind="langevin", alpha=None,
                        eps=None, n_modes=DEFAULT_MODES, n_grid=None):
    """Reference eigenvalues ``lambda_0 <= lambda_1 <= ...`` and eigenfunctions.

    Parameters
    ----------
    density : one-dimensional density
    k : int
        Number of eigenpairs; extended to complete the last degenerate cluster.
    source : {"generator", "continuum"}
    kind : str
        ``"langevin"`` or ``"standard"`` for the generator; ``"sinkhorn"`` or
        ``"standard"`` for the continuum operator.
    alpha : float, optional
    eps : float, required for ``source="continuum"``
    n_modes : int
        Odd number of Fourier modes for the generator.
    n_grid : int, optional
        Tabulation grid (collocation grid for the continuum source).

    Returns
    -------
    ReferenceEigendata
    """
    if density.d != 1:
        raise ValueError("reference_eigendata is one-dimensional; use tensor_reference")
    if source == "generator":
        if kind == "sinkhorn":
            kind = "langevin"
        vals, grid, F, ng = _generator_eigendata(density, k, kind, alpha, n_modes, n_grid)
        prov = {"source": "generator", "kind": kind, "alpha": alpha if kind == "standard" else 0.5,
                "n_modes": int(n_modes), "n_grid": int(ng)}
    elif source == "continuum":
        if eps is None:
            raise ValueError("continuum source needs eps")
        vals, grid, F, ng = _continuum_eigendata(density, k, eps, kind, alpha, n_grid or DEFAULT_GRID)
        prov = {"source": "continuum", "kind": kind, "alpha": alpha, "eps": float(eps), "n_grid": int(ng)}
    else:
        raise ValueError(f"unknown source {source!r}")
    prov["density"] = density.descriptor()
    mult = [len(c) for c in cluster_values(vals)]
    return ReferenceEigendata(np.asarray(vals), mult, grid, F, density.L, prov)


@dataclass
class TensorReference:
    """Eigendata of a separable density built from per-axis references.

    ``indices[c]`` is the tuple of per-axis eigenfunction indices whose
    product is eigenfunction ``c``; eigenvalues add.
    """

    eigenvalues: np.ndarray
    multiplicities: list
    indices: list
    axes: list

    @property
    def d(self):
        return len(self.axes)

    @property
    def provenance(self):
        return {"source": "tensor", "axes": [a.provenance for a in self.axes]}

    def evaluate(self, X):
        """Eigenfunctions at points ``X`` of shape ``(N, d)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        per_axis = [ax.evaluate(X[:, i]) for i, ax in enumerate(self.axes)]
        out = np.ones((X.shape[0], len(self.indices)))
        for c, idx in enumerate(self.indices):
            for i, j in enumerate(idx):
                out[:, c] *= per_axis[i][:, j]
        return out

    def to_dict(self):
        return {
            "provenance": self.provenance,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "multiplicities": [int(v) for v in self.multiplicities],
            "indices": [list(map(int, t)) for t in self.indices],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)


def tensor_reference(axes, k):
    """Combine one-dimensional eigendata of the factors of a product density.

    Parameters
    ----------
    axes : list of ReferenceEigendata
        One per coordinate, all with the same side length.
    k : int
        Number of eigenpairs, extended to complete the last cluster.

    Raises
    ------
    ValueError
        If the per-axis data are too short to certify the first ``k`` levels.
    """
    if not axes:
        raise ValueError("need at least one axis")
    if any(a.L != axes[0].L for a in axes):
        raise ValueError("all axes must share the side length")
    combos = []
    for idx in itertools.product(*[range(len(a.eigenvalues)) for a in axes]):
        combos.append((sum(a.eigenvalues[j] for a, j in zip(axes, idx)), idx))
    combos.sort(key=lambda t: (t[0], t[1]))
    vals = np.array([c[0] for c in combos])
    count = _complete_count(vals, k)
    if count is None:
        raise ValueError("per-axis eigendata too short for the requested k")
    # combinations above the retained level need a per-axis value beyond
    # ``top - sum of the other axes' ground values``; each axis must reach it
    top = vals[count - 1]
    base = sum(a.eigenvalues[0] for a in axes)
    for a in axes:
        needed = top - (base - a.eigenvalues[0])
        if a.eigenvalues[-1] < needed * (1 - 1e-12):
            raise ValueError("per-axis eigendata too short for the requested k")
    vals = vals[:count]
    idx = [c[1] for c in combos[:count]]
    mult = [len(c) for c in cluster_values(vals)]
    return TensorReference(vals, mult, idx, list(axes))
