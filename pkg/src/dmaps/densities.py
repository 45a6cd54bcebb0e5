"""Sampling densities on the torus and reproducible samplers.

One-dimensional densities are represented through their Fourier series
``rho(x) = sum_k c_k exp(2 pi i k x / L)``; separable densities on higher
dimensional tori are products of one-dimensional factors.  All samplers use
the counter-based Philox generator, seeded from an integer (optionally with
extra integer keys for independent streams), so draws are reproducible
across platforms.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ModelInvalidError, SamplingEfficiencyError
from .torus import TorusDomain, wrap

__all__ = [
    "make_rng",
    "Sample",
    "Density1D",
    "Uniform1D",
    "CosineLacunary1D",
    "ExpTrig1D",
    "Tabulated1D",
    "ProductDensity",
    "uniform",
    "separable_exp",
    "figure1_density",
    "figure2_density",
    "density_from_descriptor",
    "density_eval",
    "log_density_gradient",
    "sample",
    "normalization_constant",
    "effective_sample_size",
]

VALIDATION_POINTS = 4096
BISECTION_TOL = 1e-12


def make_rng(seed, *keys):
    """Philox generator for ``seed``; extra integer ``keys`` select a substream.

    The seed sequence is ``SeedSequence([seed, *keys])``, so ``make_rng(s, t)``
    for different ``t`` gives statistically independent trial streams.
    """
    if keys:
        ss = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    else:
        ss = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class Sample:
    """An i.i.d. point sample on a torus (or in Euclidean space)."""

    domain: TorusDomain
    points: np.ndarray
    seed: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] < 1:
            raise ValueError("a sample needs at least one point")
        self.points = pts

    @property
    def M(self):
        return self.points.shape[0]


def effective_sample_size(M, eps, d):
    """Expected number of points within one kernel bandwidth, ``M eps^{d/2}``."""
    return M * eps ** (d / 2)


def _positive_series(ks, cs, x, L):
    """Evaluate ``c_0 + 2 Re sum_{k>0} c_k z^k`` for Hermitian coefficients."""
    x = np.asarray(x, dtype=float)
    theta = 2 * np.pi * x / L
    out = np.full(x.shape, cs[0].real if ks[0] == 0 else 0.0)
    pos = ks > 0
    kp, cp = ks[pos], cs[pos]
    if kp.size == 0:
        return out
    if kp.size == kp[-1] and np.all(kp == np.arange(1, kp.size + 1)):
        # dense spectrum: Horner in z = exp(i theta)
        z = np.exp(1j * theta)
        acc = np.zeros(x.shape, dtype=complex)
        for c in cp[::-1]:
            acc = (acc + c) * z
        return out + 2 * acc.real
    for k, c in zip(kp, cp):
        out = out + 2 * (c.real * np.cos(k * theta) - c.imag * np.sin(k * theta))
    return out


class Density1D:
    """A normalised, strictly positive density on ``R / L Z``.

    Subclasses provide the nonnegative wavenumbers and Fourier coefficients of
    the normalised density through ``_spectrum`` (coefficients for negative
    wavenumbers are the complex conjugates).
    """

    kind = "density1d"

    def __init__(self, L=1.0):
        self.domain = TorusDomain(1, L)
        self.L = self.domain.L

    # -- to be provided by subclasses -------------------------------------
    def _spectrum(self):
        raise NotImplementedError

    def unnormalized(self, x):
        raise NotImplementedError

    def descriptor(self):
        raise NotImplementedError

    # -- generic machinery -------------------------------------------------
    @property
    def factors(self):
        return [self]

    @property
    def separable(self):
        return True

    @property
    def d(self):
        return 1

    def pdf1(self, x):
        ks, cs = self._spectrum()
        return _positive_series(ks, cs, x, self.L)

    def dlogpdf1(self, x):
        ks, cs = self._spectrum()
        dcs = cs * (2j * np.pi * ks / self.L)
        return _positive_series(ks, dcs, x, self.L) / self.pdf1(x)

    def cdf1(self, x):
        """``int_0^x rho``, for ``x`` in ``[0, L]``."""
        ks, cs = self._spectrum()
        x = np.asarray(x, dtype=float)
        out = cs[0].real * x if ks[0] == 0 else np.zeros_like(x)
        pos = ks > 0
        kp, cp = ks[pos], cs[pos]
        if kp.size == 0:
            return out
        # antiderivative of 2 Re c e^{i k t}: 2 Re c L/(2 pi i k) (e^{i k t} - 1)
        anti = cp * self.L / (2j * np.pi * kp)
        series = _positive_series(np.concatenate([[0], kp]), np.concatenate([[0.0], anti]), x, self.L)
        const = 2 * np.sum(anti).real
        return out + series - const

    def fourier_coefficients(self, m):
        """Coefficients ``c_k`` for ``k = -m..m`` as a complex array of length ``2m+1``."""
        ks, cs = self._spectrum()
        out = np.zeros(2 * m + 1, dtype=complex)
        keep = ks <= m
        out[m + ks[keep]] = cs[keep]
        kpos = ks[keep] > 0
        out[m - ks[keep][kpos]] = np.conj(cs[keep][kpos])
        return out

    def normalization_constant(self, quad_points=256):
        if quad_points < 64:
            raise ValueError("at least 64 quadrature points per axis are required")
        x = np.arange(quad_points) * (self.L / quad_points)
        return float(np.sum(self.unnormalized(x)) * (self.L / quad_points))

    def inverse_cdf(self, q):
        """Invert the CDF by bisection to ``1e-12`` in ``x``."""
        q = np.asarray(q, dtype=float) * 1.0
        grid = np.linspace(0.0, self.L, 1025)
        table = self.cdf1(grid)
        table[0], table[-1] = 0.0, 1.0
        idx = np.clip(np.searchsorted(table, q, side="right") - 1, 0, grid.size - 2)
        lo = grid[idx]
        hi = grid[idx + 1]
        n_iter = max(0, math.ceil(math.log2((self.L / 1024) / BISECTION_TOL)))
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            below = self.cdf1(mid) < q
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return wrap(self.domain, 0.5 * (lo + hi))

    # -- d-dimensional interface -------------------------------------------
    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim >= 1 and x.shape[-1] == 1 and x.ndim == 2:
            x = x[:, 0]
        return self.pdf1(x)

    def grad_log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            x = x[:, 0]
        return self.dlogpdf1(x)[..., None]

    def __repr__(self):
        return f"{type(self).__name__}({self.descriptor()})"


class Uniform1D(Density1D):
    kind = "uniform"

    def _spectrum(self):
        return np.array([0]), np.array([1.0 / self.L + 0j])

    def unnormalized(self, x):
        return np.ones_like(np.asarray(x, dtype=float))

    def pdf1(self, x):
        return np.full(np.shape(x), 1.0 / self.L)

    def dlogpdf1(self, x):
        return np.zeros(np.shape(x))

    def cdf1(self, x):
        return np.asarray(x, dtype=float) / self.L

    def descriptor(self):
        return {"kind": "uniform", "d": 1, "L": self.L}


class CosineLacunary1D(Density1D):
    """``1 + (1 - b^-p)/2 * sum_{j>=1} b^{-p j} cos(b^j 2 pi x / L)``, divided by ``L``.

    The series is cut at the first term below ``tol`` (13 terms for the
    default ``p = 2.2, b = 3``).  With ``p`` a little above 2 the density is
    only just twice differentiable.
    """

    kind = "lacunary"

    def __init__(self, p=2.2, b=3, L=1.0, n_terms=None, tol=1e-14):
        super().__init__(L)
        if int(b) != b or b < 2:
            raise ValueError("the frequency base must be an integer >= 2")
        if not p > 0:
            raise ValueError("the decay exponent must be positive")
        self.p = float(p)
        self.b = int(b)
        if n_terms is None:
            n_terms = 0
            while float(self.b) ** (-self.p * (n_terms + 1)) >= tol:
                n_terms += 1
        self.n_terms = int(n_terms)
        self.scale = (1 - float(self.b) ** -self.p) / 2
        j = np.arange(1, self.n_terms + 1)
        self.freqs = self.b ** j
        self.amps = self.scale * float(self.b) ** (-self.p * j)

    def _spectrum(self):
        ks = np.concatenate([[0], self.freqs])
        cs = np.concatenate([[1.0], self.amps / 2]).astype(complex) / self.L
        return ks, cs

    def unnormalized(self, x):
        x = np.asarray(x, dtype=float)
        theta = 2 * np.pi * x / self.L
        out = np.ones_like(x)
        for k, a in zip(self.freqs, self.amps):
            out = out + a * np.cos(k * theta)
        return out

    def pdf1(self, x):
        return self.unnormalized(x) / self.L

    def dlogpdf1(self, x):
        x = np.asarray(x, dtype=float)
        theta = 2 * np.pi * x / self.L
        num = np.zeros_like(x)
        for k, a in zip(self.freqs, self.amps):
            num = num - a * (2 * np.pi * k / self.L) * np.sin(k * theta)
        return num / self.unnormalized(x)

    def cdf1(self, x):
        x = np.asarray(x, dtype=float)
        theta = 2 * np.pi * x / self.L
        out = x.copy()
        for k, a in zip(self.freqs, self.amps):
            out = out + a * self.L / (2 * np.pi * k) * np.sin(k * theta)
        return out / self.L

    def descriptor(self):
        return {"kind": "lacunary", "p": self.p, "b": self.b, "L": self.L, "n_terms": self.n_terms}


class _DenseSpectrum1D(Density1D):
    # Fourier coefficients from an FFT of the pdf, truncated once negligible.

    _coef_tol = 1e-17

    def _fft_coefficients(self, n):
        x = np.arange(n) * (self.L / n)
        c = np.fft.rfft(self.pdf1(x)) / n
        return c

    def _spectrum(self):
        if getattr(self, "_cached_spectrum", None) is None:
            n = 64
            while True:
                c = self._fft_coefficients(n)
                tail = np.max(np.abs(c[-8:]))
                if tail < self._coef_tol * abs(c[0]) or n >= 2 ** 16:
                    break
                n *= 2
            mag = np.abs(c)
            last = np.nonzero(mag >= self._coef_tol * mag[0])[0].max()
            self._cached_spectrum = (np.arange(last + 1), c[: last + 1].astype(complex))
        return self._cached_spectrum

    def fourier_coefficients(self, m):
        ks, _ = self._spectrum()
        if m > ks[-1]:
            return super().fourier_coefficients(m)
        n = 1
        while n < 4 * m + 2:
            n *= 2
        c = self._fft_coefficients(max(n, 64))[: m + 1]
        out = np.zeros(2 * m + 1, dtype=complex)
        out[m:] = c
        out[:m] = np.conj(c[1:][::-1])
        return out


class ExpTrig1D(_DenseSpectrum1D):
    """``exp(f(x)) / Z`` with ``f`` a real trigonometric polynomial.

    Parameters
    ----------
    cos, sin : dict mapping int -> float
        Coefficients ``a_k`` of ``cos(2 pi k x / L)`` and ``b_k`` of
        ``sin(2 pi k x / L)``.
    """

    kind = "exp_trig"

    def __init__(self, cos=None, sin=None, L=1.0, quad_points=256):
        super().__init__(L)
        self.cos = {int(k): float(v) for k, v in (cos or {}).items()}
        self.sin = {int(k): float(v) for k, v in (sin or {}).items()}
        if any(k < 1 for k in list(self.cos) + list(self.sin)):
            raise ValueError("trigonometric wavenumbers must be >= 1")
        self.Z = self.normalization_constant(quad_points)
        self._cached_spectrum = None

    def f(self, x):
        x = np.asarray(x, dtype=float)
        theta = 2 * np.pi * x / self.L
        out = np.zeros_like(x)
        for k, a in self.cos.items():
            out = out + a * np.cos(k * theta)
        for k, b in self.sin.items():
            out = out + b * np.sin(k * theta)
        return out

    def df(self, x):
        x = np.asarray(x, dtype=float)
        theta = 2 * np.pi * x / self.L
        w = 2 * np.pi / self.L
        out = np.zeros_like(x)
        for k, a in self.cos.items():
            out = out - a * k * w * np.sin(k * theta)
        for k, b in self.sin.items():
            out = out + b * k * w * np.cos(k * theta)
        return out

    def unnormalized(self, x):
        return np.exp(self.f(x))

    def pdf1(self, x):
        return np.exp(self.f(x)) / self.Z

    def dlogpdf1(self, x):
        return self.df(x)

    def descriptor(self):
        return {
            "kind": "exp_trig",
            "L": self.L,
            "cos": [[k, v] for k, v in sorted(self.cos.items())],
            "sin": [[k, v] for k, v in sorted(self.sin.items())],
        }


class Tabulated1D(_DenseSpectrum1D):
    """Density given by values on the uniform grid ``x_j = j L / N``.

    Between grid points the density is the trigonometric interpolant; the
    values are rescaled so that it integrates to one.
    """

    kind = "tabulated"

    def __init__(self, values, L=1.0):
        super().__init__(L)
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size < 3:
            raise ValueError("tabulated density needs a 1-d array of at least 3 values")
        self.values = values
        n = values.size
        c = np.fft.rfft(values) / n
        if n % 2 == 0:
            c[-1] = c[-1] / 2  # split the Nyquist mode between +-N/2
        Z = c[0].real * self.L
        if not Z > 0:
            raise ModelInvalidError("tabulated values do not have positive mass")
        self.Z = Z
        self._coefs = c / Z
        self._cached_spectrum = (np.arange(c.size), self._coefs.astype(complex))
        grid = np.arange(VALIDATION_POINTS) * (self.L / VALIDATION_POINTS)
        if np.min(self.pdf1(grid)) <= 0:
            raise ModelInvalidError("trigonometric interpolant of the table is not strictly positive")

    def _spectrum(self):
        return self._cached_spectrum

    def fourier_coefficients(self, m):
        return Density1D.fourier_coefficients(self, m)

    def unnormalized(self, x):
        return self.pdf1(x) * self.Z

    def descriptor(self):
        return {"kind": "tabulated", "L": self.L, "values": self.values.tolist()}


class ProductDensity:
    """Separable density ``rho(x) = prod_i rho_i(x_i)`` on ``(R / L Z)^d``."""

    def __init__(self, factors, kind="product"):
        factors = list(factors)
        if not factors:
            raise ValueError("need at least one factor")
        L = factors[0].L
        if any(f.L != L for f in factors):
            raise ValueError("all factors must share the side length")
        self._factors = factors
        self.kind = kind
        self.domain = TorusDomain(len(factors), L)
        self.L = L

    @property
    def factors(self):
        return self._factors

    @property
    def separable(self):
        return True

    @property
    def d(self):
        return self.domain.d

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1 and self.d == 1:
            x = x[:, None]
        if x.shape[-1] != self.d:
            raise ValueError(f"expected points with {self.d} coordinates, got shape {x.shape}")
        return x

    def pdf(self, x):
        x = self._check(x)
        out = np.ones(x.shape[:-1])
        for i, f in enumerate(self._factors):
            out = out * f.pdf1(x[..., i])
        return out

    def grad_log_pdf(self, x):
        x = self._check(x)
        return np.stack([f.dlogpdf1(x[..., i]) for i, f in enumerate(self._factors)], axis=-1)

    def unnormalized(self, x):
        x = self._check(x)
        out = np.ones(x.shape[:-1])
        for i, f in enumerate(self._factors):
            out = out * f.unnormalized(x[..., i])
        return out

    def normalization_constant(self, quad_points=256):
        return float(np.prod([f.normalization_constant(quad_points) for f in self._factors]))

    def descriptor(self):
        if self.kind == "uniform":
            return {"kind": "uniform", "d": self.d, "L": self.L}
        if self.kind == "separable_exp":
            axes = [{"cos": f.descriptor()["cos"], "sin": f.descriptor()["sin"]} for f in self._factors]
            return {"kind": "separable_exp", "L": self.L, "axes": axes}
        return {"kind": "product", "L": self.L, "factors": [f.descriptor() for f in self._factors]}

    def __repr__(self):
        return f"ProductDensity(kind={self.kind!r}, d={self.d})"


def uniform(d=1, L=1.0):
    """Uniform density on ``(R / L Z)^d``."""
    if d == 1:
        return Uniform1D(L)
    return ProductDensity([Uniform1D(L) for _ in range(d)], kind="uniform")


def separable_exp(axes, L=1.0):
    """Product of ``exp(f_i(x_i))`` factors; ``axes`` is a list of ``(cos, sin)`` dicts."""
    factors = [ExpTrig1D(cos=c, sin=s, L=L) for c, s in axes]
    if len(factors) == 1:
        return factors[0]
    return ProductDensity(factors, kind="separable_exp")


def figure1_density():
    """The lacunary cosine density with ``p = 2.2`` and ``b = 3`` on ``R / Z``."""
    return CosineLacunary1D(p=2.2, b=3, L=1.0)


def figure2_density():
    """``rho(x, y, z) ∝ exp(cos 4 pi x + f(y) + f(z))`` on ``(R / Z)^3``.

    Here ``f(t) = 0.4 cos 2 pi t + 0.12 sin 4 pi t``.
    """
    fx = ({2: 1.0}, {})
    fy = ({1: 0.4}, {2: 0.12})
    return separable_exp([fx, fy, fy], L=1.0)


def _pairs_to_dict(pairs):
    if pairs is None:
        return {}
    if isinstance(pairs, dict):
        return {int(k): float(v) for k, v in pairs.items()}
    return {int(k): float(v) for k, v in pairs}


def density_from_descriptor(desc):
    """Build a density from a configuration mapping (see the README for keys)."""
    kind = desc.get("kind")
    L = float(desc.get("L", 1.0))
    if kind == "uniform":
        return uniform(int(desc.get("d", 1)), L)
    if kind in ("lacunary", "cosine_lacunary"):
        return CosineLacunary1D(
            p=float(desc.get("p", 2.2)), b=int(desc.get("b", 3)), L=L,
            n_terms=desc.get("n_terms"), tol=float(desc.get("tol", 1e-14)),
        )
    if kind == "figure1":
        return figure1_density()
    if kind == "figure2":
        return figure2_density()
    if kind == "exp_trig":
        return ExpTrig1D(_pairs_to_dict(desc.get("cos")), _pairs_to_dict(desc.get("sin")), L=L)
    if kind == "separable_exp":
        axes = desc.get("axes")
        if not axes:
            raise ValueError("separable_exp density needs a nonempty 'axes' list")
        return separable_exp([(_pairs_to_dict(a.get("cos")), _pairs_to_dict(a.get("sin"))) for a in axes], L=L)
    if kind == "tabulated":
        if "values" in desc:
            values = desc["values"]
        elif "file" in desc:
            values = np.loadtxt(desc["file"], dtype=float, ndmin=1)
        else:
            raise ValueError("tabulated density needs 'values' or 'file'")
        return Tabulated1D(values, L=L)
    if kind == "product":
        return ProductDensity([density_from_descriptor(f) for f in desc["factors"]])
    raise ValueError(f"unknown density kind {kind!r}")


# -- functional interface ----------------------------------------------------

def density_eval(model, x):
    """``rho(x)``; raises :class:`ModelInvalidError` if any value is not positive."""
    vals = model.pdf(x)
    if np.any(~(vals > 0)):
        raise ModelInvalidError("density evaluated to a non-positive value")
    return vals


def log_density_gradient(model, x):
    """``grad log rho(x)`` with shape ``(N, d)``."""
    return model.grad_log_pdf(x)


def normalization_constant(model, quad_points=256):
    """Trapezoidal quadrature of the unnormalised density over the torus."""
    return model.normalization_constant(quad_points)


def _rejection(model, M, rng, batch=None):
    dom = model.domain
    grid = np.arange(VALIDATION_POINTS) * (dom.L / VALIDATION_POINTS)
    bound = 1.05 * float(np.prod([np.max(f.pdf1(grid)) for f in model.factors]))
    rate = 1.0 / (bound * dom.volume)
    if rate < 1e-3:
        raise SamplingEfficiencyError(f"rejection acceptance rate {rate:.2e} is below 1e-3")
    batch = batch or max(64, int(1.2 * M / rate))
    accepted = []
    count = 0
    while count < M:
        prop = rng.random((batch, dom.d)) * dom.L
        keep = rng.random(batch) * bound < model.pdf(prop)
        accepted.append(prop[keep])
        count += int(keep.sum())
    return np.concatenate(accepted)[:M]


def sample(model, M, seed, method="auto", keys=()):
    """Draw ``M`` i.i.d. points from ``model``.

    ``method="auto"`` uses per-axis inverse-CDF sampling for separable models
    and rejection against the uniform envelope otherwise.  ``keys`` are
    forwarded to :func:`make_rng` to select an independent stream.
    """
    if M < 1:
        raise ValueError("sample size must be at least 1")
    rng = make_rng(seed, *keys)
    if method == "auto":
        method = "inverse_cdf" if model.separable else "rejection"
    if method == "inverse_cdf":
        q = rng.random((M, model.d))
        pts = np.stack([f.inverse_cdf(q[:, i]) for i, f in enumerate(model.factors)], axis=1)
    elif method == "rejection":
        pts = _rejection(model, M, rng)
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    return Sample(model.domain, pts, int(seed))
