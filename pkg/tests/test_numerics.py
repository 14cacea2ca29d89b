import numpy as np
import pytest

from src.linalg.numerics import eig_dense, lstsq, pinv, thin_svd, truncate_rank, vandermonde
from src.utils.errors import NumericalError, ShapeError


class TestThinSvd:
    def test_reconstructs_matrix(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((12, 5))
        U, sigma, V = thin_svd(A)
        assert U.shape == (12, 5) and V.shape == (5, 5)
        np.testing.assert_allclose(U * sigma @ V.T, A, atol=1e-12)
        assert np.all(np.diff(sigma) <= 0)

    def test_orthonormal_factors(self):
        A = np.random.default_rng(1).standard_normal((6, 9))
        U, _, V = thin_svd(A)
        np.testing.assert_allclose(U.T @ U, np.eye(6), atol=1e-12)
        np.testing.assert_allclose(V.T @ V, np.eye(6), atol=1e-12)

    def test_rejects_non_finite(self):
        A = np.ones((3, 3))
        A[1, 1] = np.nan
        with pytest.raises(NumericalError):
            thin_svd(A)

    def test_rejects_vector(self):
        with pytest.raises(ShapeError):
            thin_svd(np.ones(4))

    @pytest.mark.parametrize("shape", [(256, 256), (256, 40), (40, 256), (100, 3)])
    def test_reconstruction_at_scale(self, shape):
        A = np.random.default_rng(shape[0] + shape[1]).standard_normal(shape)
        U, sigma, V = thin_svd(A)
        assert np.linalg.norm(U * sigma @ V.T - A) / np.linalg.norm(A) <= 1e-10


class TestTruncateRank:
    def test_zero_epsilon_is_numerical_rank(self):
        assert truncate_rank(np.array([3.0, 1.0, 1e-15, 0.0]), 0.0) == 2

    def test_energy_threshold(self):
        # energies 16/25, 9/25 -> 64 % is not enough for 1 - 0.3
        assert truncate_rank(np.array([4.0, 3.0]), 0.3) == 2
        assert truncate_rank(np.array([4.0, 3.0]), 0.4) == 1

    def test_minimality_on_random_spectra(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            sigma = np.sort(rng.exponential(size=rng.integers(1, 30)))[::-1]
            epsilon = rng.uniform(0.0, 0.5)
            rank = truncate_rank(sigma, epsilon)
            energy = np.cumsum(sigma ** 2)
            energy /= energy[-1]
            assert energy[rank - 1] >= 1.0 - epsilon
            if rank > 1:
                assert energy[rank - 2] < 1.0 - epsilon

    def test_invalid_epsilon(self):
        with pytest.raises(ValueError):
            truncate_rank(np.array([1.0]), 1.0)

    def test_all_zero_spectrum(self):
        with pytest.raises(NumericalError):
            truncate_rank(np.zeros(3), 0.0)


class TestEigAndSolvers:
    def test_eig_of_rotation(self):
        theta = 0.3
        A = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        eigenvalues, vectors = eig_dense(A)
        np.testing.assert_allclose(np.sort_complex(eigenvalues), np.sort_complex(np.exp([-1j * theta, 1j * theta])),
                                   atol=1e-14)
        np.testing.assert_allclose(A @ vectors, vectors * eigenvalues, atol=1e-14)

    def test_eig_needs_square(self):
        with pytest.raises(ShapeError):
            eig_dense(np.ones((2, 3)))

    def test_lstsq_vector_and_matrix_rhs(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((8, 3))
        x = rng.standard_normal(3)
        np.testing.assert_allclose(lstsq(A, A @ x), x, atol=1e-12)
        X = rng.standard_normal((3, 2))
        np.testing.assert_allclose(lstsq(A, A @ X), X, atol=1e-12)

    def test_lstsq_minimum_norm(self):
        A = np.array([[1.0, 1.0]])
        np.testing.assert_allclose(lstsq(A, np.array([2.0])), [1.0, 1.0], atol=1e-14)

    def test_pinv_complex(self):
        rng = np.random.default_rng(4)
        A = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
        np.testing.assert_allclose(pinv(A), np.linalg.pinv(A), atol=1e-12)

    def test_pinv_drops_tiny_singular_values(self):
        A = np.diag([1.0, 1e-14])
        np.testing.assert_allclose(pinv(A), np.diag([1.0, 0.0]))

    def test_vandermonde(self):
        V = vandermonde(np.array([2.0, 1j]), 3)
        np.testing.assert_allclose(V, [[1, 2, 4], [1, 1j, -1]])
        with pytest.raises(ValueError):
            vandermonde(np.array([1.0]), 0)

    def test_real_matrix_gives_conjugate_pairs(self):
        for seed in range(10):
            A = np.random.default_rng(seed).standard_normal((7, 7))
            eigenvalues, _ = eig_dense(A)
            np.testing.assert_array_equal(np.sort_complex(eigenvalues), np.sort_complex(eigenvalues.conj()))

    def test_companion_matrix_roots(self):
        # x^3 - 6x^2 + 11x - 6 = (x - 1)(x - 2)(x - 3)
        A = np.array([[6.0, -11.0, 6.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        eigenvalues, _ = eig_dense(A)
        np.testing.assert_allclose(np.sort(eigenvalues.real), [1.0, 2.0, 3.0], atol=1e-10)
        np.testing.assert_allclose(eigenvalues.imag, 0.0, atol=1e-10)

    def test_pinv_of_orthonormal_columns_is_transpose(self):
        Q, _ = np.linalg.qr(np.random.default_rng(5).standard_normal((9, 4)))
        np.testing.assert_allclose(pinv(Q), Q.T, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_pinv_penrose_conditions(self, seed):
        rng = np.random.default_rng(seed)
        # rank 3 inside a 7 x 5 matrix
        A = rng.standard_normal((7, 3)) @ rng.standard_normal((3, 5))
        P = pinv(A)
        scale = np.linalg.norm(A)
        assert np.linalg.norm(A @ P @ A - A) <= 1e-10 * scale
        assert np.linalg.norm(P @ A @ P - P) <= 1e-10 * np.linalg.norm(P)
        np.testing.assert_allclose(A @ P, (A @ P).T, atol=1e-10)
        np.testing.assert_allclose(P @ A, (P @ A).T, atol=1e-10)

    def test_vandermonde_matches_principal_log(self):
        rng = np.random.default_rng(6)
        lambdas = rng.uniform(0.5, 2.0, 8) * np.exp(1j * rng.uniform(-np.pi, np.pi, 8))
        powers = np.arange(12)
        expected = np.exp(powers[None, :] * np.log(lambdas)[:, None])
        np.testing.assert_allclose(vandermonde(lambdas, 12), expected, rtol=1e-12, atol=0.0)
