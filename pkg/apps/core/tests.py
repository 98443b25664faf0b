import numpy as np
from django.test import SimpleTestCase

from apps.core.exceptions import MaxIterations, SingularMatrix, SolverError, add_context
from apps.core.seeding import STREAM_INSTANCE, STREAM_SCENARIOS, derive_seed, make_rng


class SeedingTests(SimpleTestCase):
    def test_derive_seed_is_stable_and_keyed(self):
        self.assertEqual(derive_seed(1, 0, 3), derive_seed(1, 0, 3))
        self.assertNotEqual(derive_seed(1, 0, 3), derive_seed(1, 0, 4))
        self.assertNotEqual(derive_seed(1, 0, 3), derive_seed(2, 0, 3))
        self.assertTrue(0 <= derive_seed(123, 4, 5) < 2**63)

    def test_streams_are_independent(self):
        a = make_rng(7, STREAM_INSTANCE).uniform(size=5)
        b = make_rng(7, STREAM_SCENARIOS).uniform(size=5)
        self.assertFalse(np.array_equal(a, b))
        np.testing.assert_array_equal(a, make_rng(7, STREAM_INSTANCE).uniform(size=5))


class ErrorTests(SimpleTestCase):
    def test_hierarchy(self):
        self.assertTrue(issubclass(SingularMatrix, SolverError))
        exc = MaxIterations("stuck", iterations=7, residual=1e-3)
        self.assertEqual((exc.iterations, exc.residual), (7, 1e-3))

    def test_context_notes_accumulate(self):
        exc = SolverError("boom")
        add_context(exc, "scenario 2")
        add_context(exc, "outer iteration 5")
        self.assertEqual(exc.__notes__, ["scenario 2", "outer iteration 5"])
