import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from dmaps.densities import (
    CosineLacunary1D,
    ExpTrig1D,
    ProductDensity,
    Tabulated1D,
    density_eval,
    density_from_descriptor,
    effective_sample_size,
    figure1_density,
    figure2_density,
    log_density_gradient,
    make_rng,
    normalization_constant,
    sample,
    uniform,
)
from dmaps.errors import ModelInvalidError, SamplingEfficiencyError


def f_axis(t):
    return 0.4 * np.cos(2 * np.pi * t) + 0.12 * np.sin(4 * np.pi * t)


class TestEvaluation:
    def test_uniform_is_one(self):
        x = np.linspace(0, 1, 17, endpoint=False)
        np.testing.assert_array_equal(density_eval(uniform(1), x), 1.0)
        np.testing.assert_allclose(density_eval(uniform(2, 2.0), np.zeros((3, 2))), 0.25)

    def test_lacunary_at_origin(self):
        # the full series sums to (1 - b^-p)/2 * b^-p/(1 - b^-p) = b^-p / 2
        rho = figure1_density()
        np.testing.assert_allclose(density_eval(rho, np.array([0.0]))[0],
                                   1 + 3 ** -2.2 / 2, rtol=1e-13)

    def test_lacunary_matches_caption_formula(self):
        rho = figure1_density()
        x = np.random.default_rng(3).random(50)
        ref = np.ones_like(x)
        for j in range(1, 31):
            ref += (1 - 3 ** -2.2) / 2 * 3 ** (-2.2 * j) * np.cos(3 ** j * 2 * np.pi * x)
        np.testing.assert_allclose(density_eval(rho, x), ref, atol=1e-13)

    def test_lacunary_truncation(self):
        assert figure1_density().n_terms == 13
        assert 3.0 ** (-2.2 * 14) < 1e-14 <= 3.0 ** (-2.2 * 13)

    def test_figure2_at_origin(self):
        mpmath.mp.dps = 30
        zx = mpmath.quad(lambda t: mpmath.exp(mpmath.cos(4 * mpmath.pi * t)), [0, 0.5, 1])
        zy = mpmath.quad(lambda t: mpmath.exp(0.4 * mpmath.cos(2 * mpmath.pi * t)
                                              + 0.12 * mpmath.sin(4 * mpmath.pi * t)), [0, 0.5, 1])
        expected = float(mpmath.e ** 1.8 / (zx * zy * zy))
        np.testing.assert_allclose(density_eval(figure2_density(), np.zeros((1, 3)))[0], expected, rtol=1e-13)

    def test_nonpositive_table_rejected(self):
        with pytest.raises(ModelInvalidError):
            Tabulated1D([1.0, -0.5, 1.0, 1.0])

    def test_tabulated_interpolates_grid(self):
        vals = 1 + 0.5 * np.cos(2 * np.pi * np.arange(16) / 16)
        rho = Tabulated1D(vals)
        x = np.arange(16) / 16
        np.testing.assert_allclose(rho.pdf(x), vals / vals.mean(), rtol=1e-14)
        # between grid points the band-limited interpolant is the cosine itself
        np.testing.assert_allclose(rho.pdf(np.array([0.03])), 1 + 0.5 * np.cos(2 * np.pi * 0.03), rtol=1e-13)


class TestNormalization:
    @pytest.mark.parametrize("rho", [uniform(1), figure1_density(), figure2_density(),
                                     ExpTrig1D({1: 0.7}, {3: -0.2}, L=2.0),
                                     Tabulated1D(np.exp(np.sin(2 * np.pi * np.arange(32) / 32)))])
    def test_integrates_to_one(self, rho):
        for f in rho.factors:
            val, _ = integrate.quad(f.pdf1, 0, f.L, limit=500, epsabs=1e-13, epsrel=1e-13)
            np.testing.assert_allclose(val, 1.0, atol=1e-10)
            grid = np.arange(4096) * f.L / 4096
            assert np.all(f.pdf1(grid) > 0)

    def test_constants(self):
        assert normalization_constant(uniform(1)) == 1.0
        np.testing.assert_allclose(normalization_constant(figure1_density()), 1.0, rtol=1e-14)

    def test_self_convergence(self):
        f = figure2_density().factors[1]
        np.testing.assert_allclose(f.normalization_constant(256), f.normalization_constant(512), rtol=1e-12)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            normalization_constant(uniform(1), 32)

    def test_fourier_coefficients_match_quadrature(self):
        f = figure2_density().factors[1]
        m = 5
        c = f.fourier_coefficients(m)
        x = np.arange(512) / 512
        for k in range(-m, m + 1):
            ref = np.mean(f.pdf1(x) * np.exp(-2j * np.pi * k * x))
            np.testing.assert_allclose(c[m + k], ref, atol=1e-15)


class TestGradients:
    def test_uniform_zero(self):
        np.testing.assert_array_equal(log_density_gradient(uniform(3), np.full((4, 3), 0.3)), 0.0)

    def test_lacunary_even(self):
        np.testing.assert_allclose(log_density_gradient(figure1_density(), np.array([0.0])), 0.0, atol=1e-15)

    def test_separable_components(self):
        x = np.random.default_rng(0).random((20, 3))
        g = log_density_gradient(figure2_density(), x)
        h = 1e-6
        np.testing.assert_allclose(g[:, 1], (f_axis(x[:, 1] + h) - f_axis(x[:, 1] - h)) / (2 * h), atol=1e-7)

    @pytest.mark.parametrize("rho", [figure1_density(), figure2_density(),
                                     Tabulated1D(2 + np.cos(2 * np.pi * np.arange(12) / 12))])
    def test_finite_differences(self, rho):
        rng = np.random.default_rng(1)
        x = rng.random((30, rho.d))
        g = log_density_gradient(rho, x)
        g = g.reshape(30, rho.d)
        h = 1e-6
        for i in range(rho.d):
            e = np.zeros(rho.d)
            e[i] = h
            fd = (np.log(density_eval(rho, x + e)) - np.log(density_eval(rho, x - e))) / (2 * h)
            # the lacunary density has |rho''| up to ~ 3^{13(2 - 2.2)} scale; use a relative band
            np.testing.assert_allclose(g[:, i], fd, atol=1e-6 * max(1, np.max(np.abs(fd))))


class TestSampling:
    def test_determinism(self):
        a = sample(figure2_density(), 500, seed=7)
        b = sample(figure2_density(), 500, seed=7)
        np.testing.assert_array_equal(a.points, b.points)
        c = sample(figure2_density(), 500, seed=7, keys=(1,))
        assert not np.array_equal(a.points, c.points)

    def test_uniform_mean(self):
        s = sample(uniform(2, 3.0), 4000, seed=1)
        np.testing.assert_allclose(s.points.mean(axis=0), 1.5, atol=5 * 3.0 / np.sqrt(4000))
        assert np.all((s.points >= 0) & (s.points < 3.0))

    def test_lacunary_ks(self):
        rho = figure1_density()
        M = 100_000
        s = sample(rho, M, seed=11)
        res = stats.kstest(s.points[:, 0], rho.cdf1)
        assert res.statistic < 1.63 / np.sqrt(M)

    @pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
    def test_cdf_matches_quadrature(self):
        rho = figure1_density()
        for x in (0.1, 0.37, 0.9):
            val, _ = integrate.quad(rho.pdf1, 0, x, limit=2000, epsabs=1e-13)
            np.testing.assert_allclose(rho.cdf1(x), val, atol=1e-11)

    def test_inverse_cdf_accuracy(self):
        rho = figure2_density().factors[0]
        q = np.linspace(0.001, 0.999, 101)
        x = rho.inverse_cdf(q)
        np.testing.assert_allclose(rho.cdf1(x), q, atol=1e-11)

    @pytest.mark.parametrize("method", ["inverse_cdf", "rejection"])
    def test_chi_squared_marginals(self, method):
        rho = figure2_density()
        M = 100_000
        s = sample(rho, M, seed=5, method=method)
        edges = np.linspace(0, 1, 41)
        for i, f in enumerate(rho.factors):
            counts, _ = np.histogram(s.points[:, i], edges)
            probs = np.diff(f.cdf1(edges))
            probs /= probs.sum()
            res = stats.chisquare(counts, M * probs)
            # Bonferroni over the axes keeps the family at the 1% level
            assert res.pvalue > 0.01 / rho.d

    def test_rejection_efficiency_error(self):
        # peak/mean of exp(30 cos) is about sqrt(60 pi) per axis
        sharp = ExpTrig1D({1: 30.0})
        with pytest.raises(SamplingEfficiencyError):
            sample(ProductDensity([sharp, sharp, sharp]), 10, seed=0, method="rejection")

    def test_bad_size(self):
        with pytest.raises(ValueError):
            sample(uniform(1), 0, seed=0)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 50))
    def test_in_domain(self, seed, M):
        s = sample(figure1_density(), M, seed)
        assert s.M == M
        assert np.all((s.points >= 0) & (s.points < 1))

    def test_rng_streams(self):
        a = make_rng(3, 0).random(5)
        b = make_rng(3, 1).random(5)
        assert not np.array_equal(a, b)
        np.testing.assert_array_equal(make_rng(3, 0).random(5), a)


class TestDescriptors:
    @pytest.mark.parametrize("rho", [uniform(1), uniform(2), figure1_density(), figure2_density(),
                                     ExpTrig1D({2: 0.3})])
    def test_roundtrip(self, rho):
        again = density_from_descriptor(rho.descriptor())
        x = np.random.default_rng(0).random((10, rho.d))
        np.testing.assert_allclose(again.pdf(x), rho.pdf(x), rtol=1e-14)

    def test_unknown(self):
        with pytest.raises(ValueError):
            density_from_descriptor({"kind": "nope"})

    def test_effective_sample_size(self):
        np.testing.assert_allclose(effective_sample_size(1000, 0.01, 2), 10.0)
