import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dmaps.densities import uniform
from dmaps.metrics import (
    ERROR_COLUMNS,
    eigenvalue_errors,
    fit_rate,
    subspace_distance,
    write_error_table,
)
from dmaps.reference import reference_eigendata

N = 64
X = np.arange(N) / N


def trig(k):
    return np.stack([np.cos(2 * np.pi * k * X), np.sin(2 * np.pi * k * X)], 1)


def brute_sup_distance(A, B, n_dir=4000):
    """Sample directions on the unit circle of a 2-d span and solve each inner problem by LP."""
    from scipy.optimize import linprog
    best = 0.0
    for t in np.linspace(0, np.pi, n_dir, endpoint=False):
        phi = A @ np.array([np.cos(t), np.sin(t)])
        phi = phi / np.max(np.abs(phi))
        k = B.shape[1]
        c = np.zeros(k + 1)
        c[-1] = 1
        ones = np.ones((B.shape[0], 1))
        res = linprog(c, A_ub=np.block([[B, -ones], [-B, -ones]]), b_ub=np.concatenate([phi, -phi]),
                      bounds=[(None, None)] * k + [(0, None)], method="highs")
        best = max(best, res.fun)
    return best


class TestWeightedL2:
    def test_identical(self):
        A = trig(1)
        r = subspace_distance(A, A, "weighted_l2")
        assert r.value == pytest.approx(0.0, abs=1e-14)
        assert (r.dim_a, r.dim_b, r.n_points) == (2, 2, N)

    def test_principal_angle(self):
        e = trig(1) * np.sqrt(2)  # orthonormal under uniform weights 1/N
        for theta in (0.1, 0.7, 1.3):
            a = (np.cos(theta) * e[:, 0] + np.sin(theta) * e[:, 1])[:, None]
            r = subspace_distance(a, e[:, :1], "weighted_l2")
            np.testing.assert_allclose(r.value, np.sin(theta), rtol=1e-12)

    def test_containment(self):
        r = subspace_distance(trig(1)[:, :1], trig(1), "weighted_l2")
        np.testing.assert_allclose(r.value, 1.0, rtol=1e-12)
        np.testing.assert_allclose(r.one_sided, [0.0, 1.0], atol=1e-12)

    def test_weights(self):
        w = np.linspace(1, 2, N)
        w /= w.sum()
        A = np.random.default_rng(0).standard_normal((N, 2))
        r = subspace_distance(A, A @ np.array([[1.0, 2.0], [0.5, -1.0]]), "weighted_l2", weights=w)
        assert r.value < 1e-12

    def test_rank_deficient(self):
        A = np.ones((N, 2))
        with pytest.raises(ValueError):
            subspace_distance(A, trig(1), "weighted_l2")

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 3))
    def test_metric_properties(self, seed, k):
        rng = np.random.default_rng(seed)
        A, B, C = (rng.standard_normal((20, k)) for _ in range(3))
        w = rng.random(20) + 0.1
        d = lambda P, Q: subspace_distance(P, Q, "weighted_l2", weights=w).value
        assert abs(d(A, B) - d(B, A)) <= 1e-10
        assert d(A, C) <= d(A, B) + d(B, C) + 1e-10
        T = rng.standard_normal((k, k)) + 3 * np.eye(k)
        assert abs(d(A @ T, B) - d(A, B)) <= 1e-10


class TestSupGrid:
    def test_three_point_closed_form(self):
        x = np.arange(3) / 3
        c = np.cos(2 * np.pi * x)[:, None]
        cs = np.stack([np.cos(2 * np.pi * x), np.sin(2 * np.pi * x)], 1)
        r = subspace_distance(c, cs, "sup_grid")
        np.testing.assert_allclose(r.one_sided[0], 0.0, atol=1e-9)
        np.testing.assert_allclose(r.value, 1.0, atol=1e-8)
        np.testing.assert_allclose([r.lower, r.upper], 1.0, atol=1e-8)
        r2 = subspace_distance(cs, c, "sup_grid")
        np.testing.assert_allclose(r2.value, r.value, atol=1e-12)

    def test_identical(self):
        r = subspace_distance(trig(2), trig(2), "sup_grid")
        assert r.upper <= 1e-8

    def test_one_dimensional_exact(self):
        a = (np.cos(2 * np.pi * X) + 0.1 * np.cos(6 * np.pi * X))[:, None]
        b = np.cos(2 * np.pi * X)[:, None]
        r = subspace_distance(a, b, "sup_grid")
        assert r.lower == pytest.approx(r.upper, abs=1e-9)
        assert 0 < r.value < 1

    def test_bounds_against_sampling(self):
        A = trig(1) + 0.05 * trig(3)
        B = trig(1)
        r = subspace_distance(A, B, "sup_grid")
        brute = max(brute_sup_distance(A, B, 720), brute_sup_distance(B, A, 720))
        assert r.lower <= r.upper + 1e-12
        assert brute <= r.upper + 1e-7
        # vertices contain the maximiser, so sampling cannot beat the lower bound by much
        assert r.lower >= brute - 1e-3

    def test_basis_invariance(self):
        A = trig(1) + 0.05 * trig(2)
        B = trig(1)
        T = np.array([[2.0, 1.0], [-0.3, 0.7]])
        r1 = subspace_distance(A, B, "sup_grid")
        r2 = subspace_distance(A @ T, B, "sup_grid")
        np.testing.assert_allclose(r1.value, r2.value, atol=1e-7)


class TestFitRate:
    def test_exact(self):
        eps = np.geomspace(1e-3, 1e-1, 7)
        assert fit_rate(eps, 3 * eps).slope == pytest.approx(1.0, abs=1e-12)
        assert fit_rate(eps, 0.2 * eps ** 2).slope == pytest.approx(2.0, abs=1e-12)

    def test_noisy(self):
        rng = np.random.default_rng(0)
        eps = np.geomspace(1e-3, 1e-1, 12)
        err = eps * (1 + 0.05 * rng.standard_normal(12))
        assert 0.9 <= fit_rate(eps, err).slope <= 1.1

    def test_rescaling_and_refit(self):
        eps = np.geomspace(1e-3, 1e-1, 9)
        err = eps ** 1.3 * (1 + 0.1 * np.sin(np.arange(9)))
        a = fit_rate(eps, err)
        assert fit_rate(eps, err).slope == a.slope
        assert abs(fit_rate(eps, 17.0 * err).slope - a.slope) <= 1e-12

    def test_errors(self):
        with pytest.raises(ValueError):
            fit_rate([1e-3, 1e-2, 1e-1], [1.0, 0.0, 2.0])
        with pytest.raises(ValueError):
            fit_rate([1e-3, 1e-2], [1.0, 2.0])


class TestEigenvalueErrors:
    def test_self_comparison(self):
        ref = reference_eigendata(uniform(1), 5, source="generator", n_modes=21)
        table = eigenvalue_errors(ref, ref, 4)
        np.testing.assert_array_equal([r["err_lambda"] for r in table], 0.0)

    def test_uniform_continuum_exact(self):
        gen = reference_eigendata(uniform(1), 5, source="generator", n_modes=21)
        cont = reference_eigendata(uniform(1), 5, source="continuum", eps=0.01, kind="sinkhorn", n_grid=256)
        table = eigenvalue_errors(cont, gen, 4)
        assert max(r["err_lambda"] for r in table) <= 1e-10
        # the graph-Laplacian convention differs by O(lambda^2 eps)
        for r in table:
            assert r["err_lambda_tilde"] <= r["reference"] ** 2 * 0.01 / 2 + 1e-10

    def test_insufficient(self):
        ref = reference_eigendata(uniform(1), 3, source="generator", n_modes=21)
        with pytest.raises(ValueError):
            eigenvalue_errors(ref, ref, 10)


class TestCSV:
    def test_columns(self):
        buf = io.StringIO()
        write_error_table(buf, [dict(k=1, eps=0.01, M=0, seed=0, normalization="sinkhorn",
                                     err_lambda=1e-3, err_lambda_tilde=2e-3)])
        lines = buf.getvalue().splitlines()
        assert lines[0].split(",") == ERROR_COLUMNS
        assert lines[1].split(",")[-3:] == ["nan", "nan", "nan"]
