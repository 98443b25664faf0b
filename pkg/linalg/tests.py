import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from apps.core.exceptions import NonFiniteEntries, NotSymmetric, SingularMatrix
from linalg.dense import (
    cholesky_check,
    dense,
    lu_solve,
    min_eigenvalue,
    min_singular_value,
    spectral_norm,
)


class DenseConstructionTests(SimpleTestCase):
    def test_row_major_entries(self):
        a = dense([1, 2, 3, 4, 5, 6], rows=2, cols=3)
        assert_allclose(a, [[1, 2, 3], [4, 5, 6]])

    def test_wrong_entry_count(self):
        with self.assertRaises(ValueError):
            dense([1, 2, 3], rows=2, cols=2)

    def test_rejects_nan(self):
        with self.assertRaises(NonFiniteEntries):
            dense([[1.0, np.nan], [0.0, 1.0]])


class LuSolveTests(SimpleTestCase):
    def test_identity(self):
        assert_allclose(lu_solve(np.eye(3), np.array([1.0, 2.0, 3.0])), [1, 2, 3])

    def test_diagonal(self):
        assert_allclose(lu_solve(np.diag([2.0, 4.0]), np.array([2.0, 4.0])), [1, 1])

    def test_permutation_needs_pivoting(self):
        x = lu_solve(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([3.0, 5.0]))
        assert_allclose(x, [5, 3])

    def test_singular(self):
        with self.assertRaises(SingularMatrix):
            lu_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.array([1.0, 1.0]))

    def test_zero_matrix(self):
        with self.assertRaises(SingularMatrix):
            lu_solve(np.zeros((2, 2)), np.ones(2))

    def test_random_well_conditioned_residual(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            n = int(rng.integers(1, 12))
            a = rng.normal(size=(n, n)) + n * np.eye(n)
            if np.linalg.cond(a) >= 1e6:
                continue
            b = rng.normal(size=n)
            x = lu_solve(a, b)
            self.assertLessEqual(np.linalg.norm(a @ x - b) / np.linalg.norm(b), 1e-9)


class CholeskyCheckTests(SimpleTestCase):
    def test_diagonal_pd(self):
        res = cholesky_check(np.diag([1.0, 2.0, 3.0, 4.0]))
        self.assertTrue(res.pd)
        self.assertEqual(res.min_pivot, 1.0)

    def test_indefinite(self):
        self.assertFalse(cholesky_check(np.diag([1.0, -1.0])).pd)

    def test_hand_factorization(self):
        res = cholesky_check(np.array([[2.0, 1.0], [1.0, 2.0]]))
        self.assertTrue(res.pd)
        self.assertAlmostEqual(res.min_pivot, 1.5, places=14)

    def test_not_symmetric(self):
        with self.assertRaises(NotSymmetric):
            cholesky_check(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_agrees_with_eigenvalue_sign(self):
        rng = np.random.default_rng(3)
        checked = 0
        for _ in range(1000):
            g = rng.uniform(-1, 1, size=(4, 4))
            a = 0.5 * (g + g.T) + rng.uniform(-0.5, 1.5) * np.eye(4)
            lam = min_eigenvalue(a)
            if abs(lam) < 1e-8:
                continue
            self.assertEqual(cholesky_check(a).pd, lam > 0)
            checked += 1
        self.assertGreater(checked, 900)


class SingularValueTests(SimpleTestCase):
    def test_identity(self):
        self.assertAlmostEqual(min_singular_value(np.eye(2)), 1.0)

    def test_diagonal(self):
        self.assertAlmostEqual(min_singular_value(np.diag([3.0, 0.5])), 0.5)

    def test_against_characteristic_polynomial(self):
        a = np.array([[1.0, 1.0], [0.0, 1.0]])
        ata = a.T @ a

        def char(lam):
            return np.linalg.det(ata - lam * np.eye(2))

        # smallest root of det(a^T a - lam I) lies in [0, 1]
        lo, hi = 0.0, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if char(lo) * char(mid) <= 0:
                hi = mid
            else:
                lo = mid
        expected = np.sqrt((3 - np.sqrt(5)) / 2)
        self.assertAlmostEqual(np.sqrt(lo), expected, places=8)
        self.assertAlmostEqual(min_singular_value(a), expected, places=8)

    def test_lower_bound_on_random_probes(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            a = rng.normal(size=(5, 5))
            s = min_singular_value(a)
            v = rng.normal(size=5)
            self.assertLessEqual(s, np.linalg.norm(a @ v) / np.linalg.norm(v) + 1e-12)

    def test_spectral_norm(self):
        self.assertAlmostEqual(spectral_norm(np.diag([3.0, -7.0])), 7.0)
