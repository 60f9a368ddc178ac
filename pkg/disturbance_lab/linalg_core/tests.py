import numpy as np
from django.test import SimpleTestCase
from scipy import sparse

from disturbance_lab.exceptions import ConfigurationError, RegularizationRequiredError, ZeroRadiusError
from .matrices import from_triplets, random_sparse, rescale_to_radius, spectral_radius, to_triplets
from .ridge import GramAccumulator, ridge_solve
from .seeding import derive_seed, make_rng


def gradient_descent_ridge(states, targets, lam, iterations=20_000):
    """Minimize Σ‖f − W r‖² + λ Tr(W Wᵀ) by plain gradient descent."""
    gram = states @ states.T
    step = 1.0 / (2.0 * (np.linalg.eigvalsh(gram).max() + lam))
    W = np.zeros((targets.shape[0], states.shape[0]))
    for _ in range(iterations):
        grad = 2.0 * (W @ states - targets) @ states.T + 2.0 * lam * W
        W -= step * grad
    return W


class RandomSparseTests(SimpleTestCase):
    def test_nonzero_count_is_binomial(self):
        M, p = 1000, 6 / 1000
        A = random_sparse(M, p, -0.5, 0.5, seed=7)
        mean = M * M * p
        sigma = np.sqrt(M * M * p * (1 - p))
        self.assertLess(abs(A.nnz - mean), 4 * sigma)
        self.assertTrue(np.all(A.data >= -0.5) and np.all(A.data <= 0.5))

    def test_degenerate_bounds_give_zero_matrix(self):
        A = random_sparse(1, 1.0, 0.0, 0.0, seed=1)
        self.assertEqual(A.shape, (1, 1))
        np.testing.assert_array_equal(A.toarray(), [[0.0]])

    def test_same_seed_is_bit_identical(self):
        first = random_sparse(50, 0.1, -0.5, 0.5, seed=123)
        second = random_sparse(50, 0.1, -0.5, 0.5, seed=123)
        np.testing.assert_array_equal(first.indptr, second.indptr)
        np.testing.assert_array_equal(first.indices, second.indices)
        np.testing.assert_array_equal(first.data, second.data)

    def test_different_seeds_differ(self):
        first = random_sparse(50, 0.1, -0.5, 0.5, seed=1)
        second = random_sparse(50, 0.1, -0.5, 0.5, seed=2)
        self.assertFalse(np.array_equal(first.toarray(), second.toarray()))

    def test_invalid_density_and_bounds(self):
        with self.assertRaises(ConfigurationError):
            random_sparse(10, 0.0, -1, 1, seed=0)
        with self.assertRaises(ConfigurationError):
            random_sparse(10, 1.5, -1, 1, seed=0)
        with self.assertRaises(ConfigurationError):
            random_sparse(10, 0.5, 1, -1, seed=0)
        with self.assertRaises(ConfigurationError):
            random_sparse(0, 0.5, -1, 1, seed=0)

    def test_triplets_round_trip(self):
        A = random_sparse(30, 0.2, -0.5, 0.5, seed=5)
        rows, cols, vals = to_triplets(A)
        B = from_triplets(rows, cols, vals, 30)
        np.testing.assert_array_equal(A.toarray(), B.toarray())


class SpectralRadiusTests(SimpleTestCase):
    def test_diagonal(self):
        A = sparse.csr_matrix(np.diag([3.0, -1.0, 0.5]))
        self.assertAlmostEqual(spectral_radius(A), 3.0, places=7)

    def test_permutation_matrix_with_tied_eigenvalues(self):
        A = sparse.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        self.assertAlmostEqual(spectral_radius(A), 1.0, places=7)

    def test_matches_dense_eigensolver(self):
        for seed in range(5):
            A = random_sparse(20, 0.3, -0.5, 0.5, seed=seed)
            expected = np.max(np.abs(np.linalg.eigvals(A.toarray())))
            self.assertLess(abs(spectral_radius(A) - expected) / expected, 1e-6)

    def test_rotation_has_complex_pair(self):
        theta = 0.3
        A = 2.0 * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        self.assertAlmostEqual(spectral_radius(A), 2.0, places=7)

    def test_zero_matrix(self):
        self.assertEqual(spectral_radius(sparse.csr_matrix((4, 4))), 0.0)


class RescaleTests(SimpleTestCase):
    def test_diagonal_scaling(self):
        A = sparse.csr_matrix(np.diag([2.0, 1.0]))
        np.testing.assert_allclose(rescale_to_radius(A, 1.2).toarray(), np.diag([1.2, 0.6]), rtol=1e-7)

    def test_identity_case(self):
        A = random_sparse(30, 0.2, -0.5, 0.5, seed=11)
        rho = spectral_radius(A)
        np.testing.assert_allclose(rescale_to_radius(A, rho).toarray(), A.toarray(), rtol=1e-12)

    def test_random_matrix_hits_target(self):
        A = random_sparse(50, 0.2, -0.5, 0.5, seed=3)
        scaled = rescale_to_radius(A, 1.2)
        self.assertLess(abs(spectral_radius(scaled) - 1.2) / 1.2, 1e-5)
        expected = np.max(np.abs(np.linalg.eigvals(scaled.toarray())))
        self.assertLess(abs(expected - 1.2), 1e-6)

    def test_zero_radius_cannot_be_rescaled(self):
        with self.assertRaises(ZeroRadiusError):
            rescale_to_radius(sparse.csr_matrix((3, 3)), 1.2)


class RidgeTests(SimpleTestCase):
    def test_exact_linear_fit(self):
        states = np.tile(np.eye(2), (1, 5))
        W = ridge_solve(states, 2.0 * states, 0.0)
        np.testing.assert_allclose(W, 2.0 * np.eye(2), atol=1e-12)

    def test_large_penalty_shrinks_to_zero(self):
        rng = make_rng(0)
        states = rng.standard_normal((4, 30))
        targets = rng.standard_normal((2, 30))
        W = ridge_solve(states, targets, 1e12)
        self.assertLess(np.abs(W).max(), 1e-9)

    def test_matches_gradient_descent_oracle(self):
        rng = make_rng(42)
        states = rng.standard_normal((5, 40))
        targets = rng.standard_normal((2, 40))
        W = ridge_solve(states, targets, 1e-6)
        oracle = gradient_descent_ridge(states, targets, 1e-6)
        np.testing.assert_allclose(W, oracle, atol=1e-5)

    def test_stationarity_condition(self):
        rng = make_rng(9)
        for lam in (0.0, 1e-6, 1.0):
            states = rng.standard_normal((8, 100))
            targets = rng.standard_normal((3, 100))
            W = ridge_solve(states, targets, lam)
            lhs = W @ (states @ states.T + lam * np.eye(8))
            rhs = targets @ states.T
            self.assertLess(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs), 1e-8)

    def test_singular_system_needs_regularization(self):
        with self.assertRaises(RegularizationRequiredError):
            ridge_solve(np.zeros((3, 10)), np.ones((1, 10)), 0.0)

    def test_zero_targets_give_zero_readout(self):
        rng = make_rng(1)
        W = ridge_solve(rng.standard_normal((4, 20)), np.zeros((2, 20)), 1e-6)
        np.testing.assert_array_equal(W, np.zeros((2, 4)))


class GramAccumulatorTests(SimpleTestCase):
    def setUp(self):
        rng = make_rng(21)
        self.states = rng.standard_normal((6, 90))
        self.targets = rng.standard_normal((2, 90))

    def test_blockwise_matches_direct_solve(self):
        acc = GramAccumulator(6, 2)
        for start in range(0, 90, 25):
            acc.update(self.states[:, start:start + 25], self.targets[:, start:start + 25])
        self.assertEqual(acc.samples, 90)
        np.testing.assert_allclose(acc.solve(1e-6), ridge_solve(self.states, self.targets, 1e-6), rtol=1e-10)

    def test_duplicated_window_halves_the_penalty(self):
        single = GramAccumulator(6, 2)
        single.update(self.states, self.targets)
        doubled = single.merge(single)
        np.testing.assert_allclose(doubled.solve(1e-3), single.solve(0.5e-3), atol=1e-6)

    def test_nrmse_from_statistics(self):
        acc = GramAccumulator(6, 2)
        acc.update(self.states, self.targets)
        W = acc.solve(1e-6)
        residual = self.targets - W @ self.states
        direct = np.sqrt(np.mean(residual ** 2, axis=1)) / self.targets.std(axis=1)
        np.testing.assert_allclose(acc.nrmse(W), direct, rtol=1e-8)

    def test_cost_is_minimized_by_solution(self):
        acc = GramAccumulator(6, 2)
        acc.update(self.states, self.targets)
        W = acc.solve(0.1)
        perturbed = W + 1e-3 * make_rng(3).standard_normal(W.shape)
        self.assertLess(acc.cost(W, 0.1), acc.cost(perturbed, 0.1))


class SeedingTests(SimpleTestCase):
    def test_derived_seeds_are_stable_and_distinct(self):
        self.assertEqual(derive_seed(5, 0), derive_seed(5, 0))
        self.assertNotEqual(derive_seed(5, 0), derive_seed(5, 1))

    def test_rejects_invalid_seeds(self):
        with self.assertRaises(ConfigurationError):
            make_rng(-1)
        with self.assertRaises(ConfigurationError):
            make_rng('abc')
