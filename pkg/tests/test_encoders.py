import numpy as np
import pytest

from oracles import bovw_counts_oracle, ifv_oracle, posterior_oracle, signed_sqrt_l2, vlad_oracle
from texdesc.descriptors import DescriptorSet
from texdesc.encoders import (Codebook, GmmModel, PcaModel, apply_pca, encode_bovw, encode_ifv,
                              encode_vlad, fisher_statistics, posterior, train_gmm, train_kmeans,
                              train_pca, vlad_residuals)


def _ds(X, kind="test"):
    X = np.asarray(X, dtype=float)
    return DescriptorSet(X, np.zeros((len(X), 3)), kind)


def _blobs(rng, n_a=300, n_b=100):
    a = rng.normal([0.0, 0.0], 0.3, (n_a, 2))
    b = rng.normal([6.0, 4.0], 0.3, (n_b, 2))
    return a, b


def _random_gmm(rng, K=3, d=4):
    priors = rng.dirichlet(np.ones(K))
    return GmmModel(priors, rng.normal(size=(K, d)), rng.uniform(0.5, 2.0, (K, d)))


class TestKmeans:
    def test_n_equals_K(self, rng):
        X = rng.normal(size=(6, 3))
        cb = train_kmeans(X, 6, seed=1)
        order = np.lexsort(cb.centers.T[::-1])
        np.testing.assert_allclose(cb.centers[order], X[np.lexsort(X.T[::-1])])
        assert cb.distortions[-1] == 0.0

    def test_blob_means(self, rng):
        a, b = _blobs(rng)
        cb = train_kmeans(np.vstack([a, b]), 2, seed=0)
        centers = cb.centers[np.argsort(cb.centers[:, 0])]
        assert np.abs(centers[0] - a.mean(axis=0)).max() < 0.1
        assert np.abs(centers[1] - b.mean(axis=0)).max() < 0.1

    def test_deterministic(self, rng):
        X = rng.normal(size=(200, 5))
        assert train_kmeans(X, 7, seed=3) == train_kmeans(X, 7, seed=3)

    def test_distortion_non_increasing(self, rng):
        X = rng.normal(size=(500, 4))
        d = np.array(train_kmeans(X, 12, seed=2).distortions)
        assert np.all(np.diff(d) <= 1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            train_kmeans(np.zeros((2, 2)), 3)
        with pytest.raises(ValueError):
            train_kmeans(np.zeros((5, 2)), 2)

    def test_save_load(self, tmp_path, rng):
        cb = train_kmeans(rng.normal(size=(30, 2)), 3)
        cb.save(tmp_path / "cb.bin", {"config_hash": "h"})
        assert Codebook.load(tmp_path / "cb.bin", "h") == Codebook(cb.centers)


class TestGmm:
    def test_single_mode_closed_form(self, rng):
        X = rng.normal([1.0, -2.0, 3.0], [0.5, 1.0, 2.0], (400, 3))
        gmm = train_gmm(X, 1)
        np.testing.assert_allclose(gmm.priors, [1.0])
        np.testing.assert_allclose(gmm.means[0], X.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(gmm.variances[0], X.var(axis=0), rtol=1e-10)

    def test_variance_floor(self):
        X = np.column_stack([np.arange(10.0), np.ones(10)])
        gmm = train_gmm(X, 1)
        assert gmm.variances[0, 1] == pytest.approx(1e-6)

    def test_blob_priors(self, rng):
        a, b = _blobs(rng)
        gmm = train_gmm(np.vstack([a, b]), 2, seed=0)
        order = np.argsort(gmm.means[:, 0])
        np.testing.assert_allclose(gmm.priors[order], [0.75, 0.25], atol=0.05)

    def test_log_likelihood_monotone(self, rng):
        X = rng.normal(size=(600, 3)) * [1.0, 2.0, 0.5]
        ll = np.array(train_gmm(X, 5, seed=4, max_iter=50).log_likelihoods)
        assert len(ll) > 2
        assert np.all(np.diff(ll) >= -1e-8)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            train_gmm(np.zeros((2, 2)), 3)

    def test_save_load_with_pca(self, tmp_path, rng):
        X = rng.normal(size=(50, 4))
        gmm = train_gmm(X, 2)
        pca = train_pca(X, 2)
        gmm.save(tmp_path / "g.bin", {"config_hash": "h"}, pca=pca)
        back, back_pca = GmmModel.load(tmp_path / "g.bin", "h")
        assert back == gmm
        np.testing.assert_array_equal(back_pca.basis, pca.basis)


class TestPca:
    def test_axis_aligned_signed_identity(self, rng):
        X = rng.normal(size=(2000, 3)) * [1.0, 3.0, 2.0]
        pca = train_pca(X, 3)
        np.testing.assert_allclose(np.abs(pca.basis), np.eye(3)[:, [1, 2, 0]], atol=0.05)
        assert np.all(pca.basis.max(axis=0) > 0.9)

    def test_full_basis_reconstructs(self, rng):
        X = rng.normal(size=(40, 5))
        pca = train_pca(X, 5)
        np.testing.assert_allclose(pca.project(X) @ pca.basis.T + pca.mean, X, atol=1e-12)

    def test_projected_covariance_diagonal(self, rng):
        X = rng.normal(size=(300, 5)) @ rng.normal(size=(5, 5))
        Y = apply_pca(train_pca(X, 2), _ds(X)).descriptors
        cov = np.cov(Y, rowvar=False)
        assert abs(cov[0, 1]) < 1e-5
        assert cov[0, 0] >= cov[1, 1]

    def test_errors(self, rng):
        with pytest.raises(ValueError):
            train_pca(rng.normal(size=(1, 3)), 2)
        with pytest.raises(ValueError):
            train_pca(rng.normal(size=(10, 3)), 4)
        with pytest.raises(ValueError):
            PcaModel(np.zeros(2), np.ones((2, 2)))


class TestPosterior:
    def test_single_mode(self, rng):
        gmm = GmmModel([1.0], [[0.0, 0.0]], [[1.0, 1.0]])
        np.testing.assert_array_equal(posterior(gmm, rng.normal(size=(4, 2))), 1.0)

    def test_symmetric_midpoint(self):
        gmm = GmmModel([0.5, 0.5], [[-1.0, 2.0], [1.0, 2.0]], [[0.7, 1.0], [0.7, 1.0]])
        np.testing.assert_allclose(posterior(gmm, [[0.0, 5.0]]), [[0.5, 0.5]], atol=1e-15)

    def test_matches_density_oracle(self, rng):
        gmm = _random_gmm(rng)
        X = rng.normal(size=(20, 4)) * 2
        want = [posterior_oracle(x, gmm.priors, gmm.means, gmm.variances) for x in X.tolist()]
        got = posterior(gmm, X)
        np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-300)
        np.testing.assert_allclose(got.sum(axis=1), 1.0)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError):
            posterior(_random_gmm(rng), np.zeros((1, 3)))


class TestBovw:
    def test_one_hot(self, rng):
        C = rng.normal(size=(8, 4))
        enc = encode_bovw(_ds(C[3:4]), Codebook(C))
        np.testing.assert_array_equal(enc.values, np.eye(8)[3])
        assert enc.recipe.encoding == "bovw"

    def test_equidistant_duplicates_single_bin(self):
        C = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
        enc = encode_bovw(_ds(np.zeros((5, 2))), Codebook(C))
        np.testing.assert_array_equal(enc.values, [1.0, 0.0, 0.0])

    def test_matches_counting_oracle(self, rng):
        C = rng.normal(size=(6, 3))
        X = rng.normal(size=(50, 3))
        counts = np.array(bovw_counts_oracle(X, C), dtype=float)
        np.testing.assert_allclose(encode_bovw(_ds(X), Codebook(C)).values,
                                   counts / counts.sum(), atol=1e-15)

    def test_empty_is_uniform(self):
        enc = encode_bovw(_ds(np.zeros((0, 2))), Codebook(np.eye(2)))
        assert enc.empty
        np.testing.assert_array_equal(enc.values, [0.5, 0.5])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            encode_bovw(_ds(np.zeros((1, 3))), Codebook(np.eye(2)))


class TestVlad:
    def test_zero_residuals(self, rng):
        C = rng.normal(size=(4, 3))
        enc = encode_vlad(_ds(C[[0, 2, 2]]), Codebook(C))
        assert enc.empty
        np.testing.assert_array_equal(enc.values, 0.0)

    def test_single_term(self):
        d = np.array([[3.0, -1.0, 0.5]])
        c = np.array([[1.0, 1.0, 1.0]])
        z = np.sign(d - c) * np.sqrt(np.abs(d - c))
        np.testing.assert_allclose(encode_vlad(_ds(d), Codebook(c)).values,
                                   (z / np.linalg.norm(z)).ravel(), atol=1e-15)

    def test_matches_residual_oracle(self, rng):
        C = rng.normal(size=(5, 3))
        X = rng.normal(size=(40, 3))
        enc = encode_vlad(_ds(X), Codebook(C))
        np.testing.assert_allclose(enc.values, vlad_oracle(X, C), atol=1e-6)
        assert np.linalg.norm(enc.values) == pytest.approx(1.0)


class TestIfv:
    def test_descriptors_at_mean(self):
        gmm = GmmModel([1.0], [[0.5, -1.0, 2.0]], [[1.0, 4.0, 0.25]])
        X = np.tile(gmm.means[0], (7, 1))
        raw = fisher_statistics(X, gmm)
        np.testing.assert_allclose(raw, [0, 0, 0] + [-1 / np.sqrt(2)] * 3, atol=1e-15)
        np.testing.assert_allclose(encode_ifv(_ds(X), gmm).values,
                                   signed_sqrt_l2(raw.tolist()), atol=1e-15)

    def test_one_sigma_descriptor(self):
        gmm = GmmModel([1.0], [[0.5, -1.0]], [[4.0, 0.25]])
        raw = fisher_statistics(np.array([[2.5, -0.5]]), gmm)
        np.testing.assert_allclose(raw, [1.0, 1.0, 0.0, 0.0], atol=1e-15)

    def test_matches_summation_oracle(self, rng):
        gmm = _random_gmm(rng, K=3, d=4)
        X = rng.normal(size=(10, 4))
        got = encode_ifv(_ds(X), gmm).values
        want = ifv_oracle(X, gmm.priors, gmm.means, gmm.variances)
        np.testing.assert_allclose(got, want, rtol=1e-6)
        assert len(got) == 2 * 3 * 4

    def test_duplication_invariance(self, rng):
        gmm = _random_gmm(rng)
        X = rng.normal(size=(9, 4))
        np.testing.assert_allclose(encode_ifv(_ds(np.vstack([X, X])), gmm).values,
                                   encode_ifv(_ds(X), gmm).values, atol=1e-14)

    def test_unit_norm_and_empty(self, rng):
        gmm = _random_gmm(rng)
        assert np.linalg.norm(encode_ifv(_ds(rng.normal(size=(5, 4))), gmm).values) == \
            pytest.approx(1.0)
        empty = encode_ifv(_ds(np.zeros((0, 4))), gmm)
        assert empty.empty and not np.any(empty.values)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError):
            encode_ifv(_ds(np.zeros((2, 3))), _random_gmm(rng))

    def test_with_pca_projection(self, rng):
        X = rng.normal(size=(100, 6))
        pca = train_pca(X, 3)
        gmm = train_gmm(pca.project(X), 2)
        enc = encode_ifv(_ds(X[:10]), gmm, pca)
        np.testing.assert_allclose(enc.values, encode_ifv(_ds(pca.project(X[:10])), gmm).values)
        assert "pca3" in enc.recipe.vocabulary

    def test_first_order_block_matches_vlad_scaled(self, rng):
        X = rng.normal(size=(12, 3))
        mu = rng.normal(size=(1, 3))
        gmm = GmmModel([1.0], mu, np.ones((1, 3)))
        u = fisher_statistics(X, gmm)[:3]
        vlad = vlad_residuals(X, Codebook(mu))
        np.testing.assert_allclose(u, vlad / len(X), atol=1e-14)
