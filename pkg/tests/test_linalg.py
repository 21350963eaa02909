import numpy as np
import pytest

from p300bench.linalg import covariance, sym_eig


def naive_covariance(X):
    """Double-loop biased covariance, the independent oracle."""
    n, p = X.shape
    mean = [sum(X[i][j] for i in range(n)) / n for j in range(p)]
    S = np.zeros((p, p))
    for a in range(p):
        for b in range(p):
            S[a, b] = sum((X[i][a] - mean[a]) * (X[i][b] - mean[b]) for i in range(n)) / n
    return S


class TestCovariance:
    def test_identical_rows_give_zero(self):
        X = np.array([[2.0, 5.0, -1.0]] * 4)
        assert np.allclose(covariance(X), 0.0, atol=1e-15)

    def test_hand_computed_two_rows(self):
        X = np.array([[1.0, 0.0], [-1.0, 0.0]])
        assert np.allclose(covariance(X), [[1.0, 0.0], [0.0, 0.0]], atol=1e-15)

    def test_matches_naive_oracle(self, rng):
        X = rng.normal(size=(10, 3))
        assert np.abs(covariance(X) - naive_covariance(X)).max() < 1e-12

    def test_symmetric_psd(self, rng):
        S = covariance(rng.normal(size=(20, 6)))
        assert np.array_equal(S, S.T)
        assert np.linalg.eigvalsh(S).min() > -1e-12

    def test_assume_centered_skips_mean(self):
        X = np.array([[1.0, 1.0], [1.0, 1.0], [4.0, 4.0]])
        S = covariance(X, assume_centered=True)
        assert np.allclose(S, X.T @ X / 3)

    def test_insufficient_samples(self):
        with pytest.raises(ValueError, match="insufficient samples"):
            covariance(np.ones((1, 3)))


class TestSymEig:
    def test_identity(self):
        w, V = sym_eig(np.eye(3))
        assert np.allclose(w, 1.0)
        assert np.allclose(V @ V.T, np.eye(3), atol=1e-12)

    def test_diagonal(self):
        w, V = sym_eig(np.diag([3.0, 1.0]))
        assert np.allclose(w, [3.0, 1.0])
        # axis-aligned eigenvectors up to sign
        assert np.allclose(np.abs(V), np.eye(2), atol=1e-12)

    def test_reconstruction_random_symmetric(self, rng):
        for _ in range(10):
            A = rng.normal(size=(5, 5))
            A = A + A.T
            w, V = sym_eig(A)
            assert np.abs(V @ np.diag(w) @ V.T - A).max() < 1e-8 * max(np.linalg.norm(A), 1)
            assert np.abs(V.T @ V - np.eye(5)).max() < 1e-8

    def test_eigenpair_identity(self, rng):
        A = rng.normal(size=(7, 7))
        A = A + A.T
        w, V = sym_eig(A)
        norm = np.linalg.norm(A)
        for i in range(7):
            assert np.abs(A @ V[:, i] - w[i] * V[:, i]).max() < 1e-8 * norm

    def test_descending_order(self, rng):
        A = rng.normal(size=(6, 6))
        w, _ = sym_eig(A + A.T)
        assert np.all(np.diff(w) <= 1e-12)

    def test_trace_and_det_invariants(self, rng):
        A = rng.normal(size=(3, 3))
        A = A + A.T
        w, _ = sym_eig(A)
        assert abs(w.sum() - np.trace(A)) < 1e-8
        assert abs(np.prod(w) - np.linalg.det(A)) < 1e-8 * max(1, abs(np.linalg.det(A)))

    def test_scale_invariance_of_convergence(self, rng):
        A = rng.normal(size=(4, 4))
        A = (A + A.T) * 1e8
        w, V = sym_eig(A)
        assert np.abs(V @ np.diag(w) @ V.T - A).max() < 1e-8 * np.linalg.norm(A)

    def test_zero_matrix(self):
        w, V = sym_eig(np.zeros((3, 3)))
        assert np.allclose(w, 0.0)
        assert np.allclose(V @ V.T, np.eye(3))

    def test_asymmetric_rejected(self):
        A = np.array([[1.0, 2.0], [0.5, 1.0]])
        with pytest.raises(ValueError, match="asymmetric matrix"):
            sym_eig(A)

    def test_non_square_rejected(self):
        with pytest.raises(ValueError, match="square"):
            sym_eig(np.ones((2, 3)))

    def test_against_numpy_eigh(self, rng):
        A = rng.normal(size=(12, 12))
        A = A + A.T
        w, _ = sym_eig(A)
        assert np.allclose(w, np.linalg.eigvalsh(A)[::-1], atol=1e-9)
