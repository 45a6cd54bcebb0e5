import io
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dmaps.densities import figure1_density, sample, uniform
from dmaps.errors import IllConditionedError
from dmaps.kernel import build_kernel_matrix
from dmaps.normalization import assa, assemble_P, standard_weights
from dmaps.spectral import (
    eigensolve,
    merge_by_reference,
    nystrom_extend,
    to_generator,
    to_graph_laplacian,
)


def make_op(kind, M=200, eps=0.01, seed=0, density=None):
    K = build_kernel_matrix(sample(density or figure1_density(), M, seed=seed), eps)
    if kind == "sinkhorn":
        w, _ = assa(K)
    else:
        w = standard_weights(K, kind)
    return assemble_P(K, w)


class TestEigensolve:
    def test_uniform_top_pair(self):
        for kind in ("sinkhorn", 0.5):
            res = eigensolve(make_op(kind, density=uniform(1)), 5)
            np.testing.assert_allclose(res.semigroup_eigs[0], 1.0, atol=1e-10)
            v = res.eigenvectors[:, 0]
            np.testing.assert_allclose(v, v[0], rtol=1e-8)

    def test_two_by_two(self):
        K = np.array([[2.0, 1.0], [1.0, 2.0]])
        op = assemble_P(K, assa(K)[0])
        res = eigensolve(op, 2)
        np.testing.assert_allclose(res.semigroup_eigs, [1.0, 1 / 3], rtol=1e-14)
        vec = res.eigenvectors / np.linalg.norm(res.eigenvectors, axis=0)
        np.testing.assert_allclose(np.abs(vec[:, 0]), [2 ** -0.5] * 2, rtol=1e-14)
        np.testing.assert_allclose(np.abs(vec[:, 1]), [2 ** -0.5] * 2, rtol=1e-14)
        assert vec[0, 1] * vec[1, 1] < 0
        # unit length in the weighted inner product (1/M) sum f^2 u/v
        np.testing.assert_allclose(np.mean(res.eigenvectors ** 2, axis=0), 1.0, rtol=1e-14)

    @pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
    def test_nonsymmetric_oracle(self, alpha):
        op = make_op(alpha, M=100, eps=0.02, seed=3)
        res = eigensolve(op, 100)
        ref = np.sort(np.linalg.eigvals(op.P).real)[::-1]
        np.testing.assert_allclose(res.semigroup_eigs, ref, atol=1e-8)

    @pytest.mark.parametrize("kind", ["sinkhorn", 0.0, 0.5, 1.0])
    def test_residual_and_orthogonality(self, kind):
        op = make_op(kind, M=250, eps=0.005, seed=2)
        res = eigensolve(op, 12)
        V = res.eigenvectors
        R = op.P @ V - V * res.semigroup_eigs
        assert np.max(np.abs(R)) <= 1e-8 * np.max(np.abs(V))
        pi = op.weights.u / op.weights.v
        G = (V * pi[:, None]).T @ V / op.M
        np.testing.assert_allclose(G, np.eye(12), atol=1e-8)
        assert np.all(np.diff(res.semigroup_eigs) <= 0)

    def test_sinkhorn_spectrum_range(self):
        for seed in range(3):
            op = make_op("sinkhorn", M=1000 if seed == 0 else 300, eps=0.003, seed=seed)
            res = eigensolve(op, op.M)
            assert res.semigroup_eigs.min() >= -1e-10
            assert res.semigroup_eigs.max() <= 1 + 1e-10
            np.testing.assert_allclose(res.semigroup_eigs[0], 1.0, atol=1e-10)
            v = res.eigenvectors[:, 0]
            np.testing.assert_allclose(v, v.mean(), rtol=1e-8)

    def test_sinkhorn_same_as_explicit(self):
        op = make_op("sinkhorn", M=150)
        res = eigensolve(op, 150)
        np.testing.assert_allclose(res.semigroup_eigs, np.linalg.eigvalsh(op.P)[::-1], atol=1e-12)

    def test_iterative_matches_dense(self):
        op = make_op(0.5, M=300, eps=0.005)
        a = eigensolve(op, 6, method="dense")
        b = eigensolve(op, 6, method="iterative")
        np.testing.assert_allclose(b.semigroup_eigs, a.semigroup_eigs, atol=1e-10)

    def test_deterministic_sign(self):
        op = make_op("sinkhorn", M=120)
        a = eigensolve(op, 4).eigenvectors
        b = eigensolve(op, 4).eigenvectors
        np.testing.assert_array_equal(a, b)

    def test_k_too_large(self):
        op = make_op("sinkhorn", M=20)
        with pytest.raises(ValueError):
            eigensolve(op, 21)
        with pytest.raises(ValueError):
            eigensolve(op, 0)

    def test_serialisation(self):
        res = eigensolve(make_op("sinkhorn", M=30), 3)
        buf = io.StringIO()
        res.to_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "k,mu,lambda,lambda_tilde"
        assert len(lines) == 4
        doc = json.loads(res.to_json(include_vectors=True))
        assert len(doc["eigenvectors"]) == 3 and len(doc["eigenvectors"][0]) == 30
        np.testing.assert_allclose(doc["mu"][0], 1.0, atol=1e-10)


class TestConversions:
    def test_generator_examples(self):
        assert to_generator(1.0, 0.1) == 0.0
        np.testing.assert_allclose(to_generator(np.exp(-0.2), 0.1), 2.0, rtol=1e-14)
        np.testing.assert_allclose(to_generator(0.5, 0.01), 69.31471805599453, rtol=1e-14)

    def test_nonpositive_sentinel(self):
        lam, flag = to_generator(np.array([0.5, 0.0, -1e-12]), 0.1, return_flags=True)
        assert np.isfinite(lam[0]) and np.all(np.isinf(lam[1:]))
        np.testing.assert_array_equal(flag, [False, True, True])

    def test_laplacian_examples(self):
        assert to_graph_laplacian(1.0, 0.3) == 0.0
        np.testing.assert_allclose(to_graph_laplacian(np.exp(-0.2), 0.1), 1.8126924692201818, rtol=1e-14)

    @given(st.floats(1e-6, 1.0), st.floats(1e-4, 1.0))
    def test_round_trip(self, mu, eps):
        lam = to_generator(mu, eps)
        np.testing.assert_allclose(np.exp(-eps * lam), mu, rtol=1e-14)

    @given(st.floats(1e-6, 1.0), st.floats(1e-4, 1.0))
    def test_laplacian_bound(self, mu, eps):
        lam = to_generator(mu, eps)
        lt = to_graph_laplacian(mu, eps)
        assert lt <= lam + 1e-12
        assert abs(lt - lam) <= lam ** 2 * eps / 2 + 1e-12

    def test_result_conventions(self):
        res = eigensolve(make_op("sinkhorn", M=200, eps=0.01), 8)
        np.testing.assert_allclose(res.generator_eigs, -np.log(res.semigroup_eigs) / 0.01, rtol=1e-14)
        np.testing.assert_allclose(res.laplacian_eigs, (1 - res.semigroup_eigs) / 0.01, rtol=1e-14)
        assert np.all(np.abs(res.laplacian_eigs - res.generator_eigs)
                      <= res.generator_eigs ** 2 * 0.01 / 2 + 1e-12)


class TestNystrom:
    @pytest.mark.parametrize("kind", ["sinkhorn", 0.0, 0.5, 1.0])
    def test_sample_points(self, kind):
        op = make_op(kind, M=300, eps=0.005, seed=4)
        res = eigensolve(op, 6)
        X = op.K.points
        for j in range(6):
            ext = nystrom_extend(op, (res.semigroup_eigs[j], res.eigenvectors[:, j]), X)
            vec = res.eigenvectors[:, j]
            np.testing.assert_allclose(ext, vec, rtol=1e-8, atol=1e-8 * np.max(np.abs(vec)))

    def test_constant(self):
        op = make_op(0.5, M=200)
        res = eigensolve(op, 1)
        X = np.linspace(0, 1, 50, endpoint=False)[:, None]
        ext = nystrom_extend(op, (res.semigroup_eigs[0], res.eigenvectors[:, 0]), X)
        np.testing.assert_allclose(ext, res.eigenvectors[0, 0], rtol=1e-8)

    def test_uniform_cosine(self):
        op = make_op("sinkhorn", M=2000, eps=1e-3, seed=1, density=uniform(1))
        res = eigensolve(op, 3)
        x = np.arange(1024) / 1024
        ext = nystrom_extend(op, (res.semigroup_eigs[1], res.eigenvectors[:, 1]), x[:, None])
        B = np.stack([np.cos(2 * np.pi * x), np.sin(2 * np.pi * x)], 1)
        coef, *_ = np.linalg.lstsq(B, ext, rcond=None)
        corr = np.linalg.norm(B @ coef) / np.linalg.norm(ext)
        assert corr >= 0.999

    def test_small_mu(self):
        op = make_op("sinkhorn", M=50)
        with pytest.raises(IllConditionedError):
            nystrom_extend(op, (1e-9, np.ones(50)), np.zeros((1, 1)))


class TestMerge:
    def test_uniform_degeneracy(self):
        res = eigensolve(make_op("sinkhorn", M=400, eps=0.002, density=uniform(1)), 5)
        ref = np.array([0, 2, 2, 8, 8]) * np.pi ** 2
        merged = merge_by_reference(res, ref)
        assert [list(g) for g in merged.groups] == [[0], [1, 2], [3, 4]]
        np.testing.assert_allclose(merged.reference_values, [0, 2 * np.pi ** 2, 8 * np.pi ** 2])
        assert not any(merged.ambiguous)

    def test_singletons(self):
        res = eigensolve(make_op("sinkhorn", M=100), 4)
        merged = merge_by_reference(res, np.array([0.0, 1.0, 2.0, 3.0]))
        assert [list(g) for g in merged.groups] == [[0], [1], [2], [3]]

    def test_incomplete_cluster_dropped(self):
        res = eigensolve(make_op("sinkhorn", M=100), 2)
        merged = merge_by_reference(res, np.array([0.0, 5.0, 5.0]))
        assert [list(g) for g in merged.groups] == [[0]]

    def test_ambiguous_flag(self):
        res = eigensolve(make_op("sinkhorn", M=100, eps=0.01, density=uniform(1)), 3)
        lam1 = res.generator_eigs[1]
        merged = merge_by_reference(res, np.array([0.0, lam1 - 0.01, lam1 + 0.01]), gap_tol=0.1)
        assert merged.ambiguous[1]
