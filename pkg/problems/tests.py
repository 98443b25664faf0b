import json

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_array_equal, assert_allclose

from apps.core.exceptions import IndefiniteScenario, InvalidConfig, InvalidDims
from problems.data import Dimensions, problem_from_document, problem_to_document
from problems.services import (
    build_saa_problem,
    generate_instance,
    sample_scenarios,
    scenario_from_xi,
    strong_modulus,
)


def default_instance(tau=0.5, seed=1):
    return generate_instance(Dimensions(), tau=tau, lb=-10.0, ub=10.0, seed=seed)


class DimensionsTests(SimpleTestCase):
    def test_xi_dim_default(self):
        self.assertEqual(Dimensions().xi_dim, 49)

    def test_zero_dimension_rejected(self):
        with self.assertRaises(InvalidDims):
            Dimensions(n1=0)

    def test_selector_needs_room(self):
        with self.assertRaises(InvalidDims):
            Dimensions(n2=1, l2=2)


class GenerateInstanceTests(SimpleTestCase):
    def test_first_stage_fixed_matrices(self):
        inst = default_instance()
        assert_array_equal(inst.Q1, 0.1 * np.eye(3))
        assert_array_equal(inst.S1, np.eye(2))

    def test_second_stage_base_data(self):
        inst = default_instance()
        assert_array_equal(inst.Qbar2, np.diag([1.0, 2.0, 3.0, 4.0]))
        assert_array_equal(inst.Sbar2, np.eye(3))
        assert_array_equal(inst.hbar, [0.1, 0.1])
        assert_array_equal(inst.cbar, [0.1, 0.1])
        self.assertEqual(inst.noise_scale, 0.1)

    def test_uniform_draws_in_unit_interval(self):
        inst = default_instance()
        for name in ("O1", "d1", "t1", "Obar2", "Tbar", "Abar", "dbar2", "tbar2"):
            arr = getattr(inst, name)
            self.assertTrue(np.all((arr >= 0) & (arr <= 1)), name)

    def test_same_seed_is_bitwise_identical(self):
        a, b = default_instance(seed=42), default_instance(seed=42)
        for name in ("O1", "d1", "t1", "Obar2", "Tbar", "Abar", "dbar2", "tbar2"):
            self.assertEqual(getattr(a, name).tobytes(), getattr(b, name).tobytes())

    def test_different_seeds_differ(self):
        self.assertFalse(np.array_equal(default_instance(seed=1).O1, default_instance(seed=2).O1))

    def test_invalid_box(self):
        with self.assertRaises(InvalidConfig):
            generate_instance(Dimensions(), tau=0.5, lb=1.0, ub=1.0, seed=0)

    def test_invalid_tau(self):
        with self.assertRaises(InvalidConfig):
            generate_instance(Dimensions(), tau=0.0, lb=-1.0, ub=1.0, seed=0)


class SampleScenariosTests(SimpleTestCase):
    def test_empty(self):
        self.assertEqual(sample_scenarios(default_instance(), 0, seed=3), [])

    def test_zero_noise_draw(self):
        inst = default_instance()
        scn = scenario_from_xi(inst, np.zeros(49))
        assert_array_equal(scn.Q2, 0.5 * np.diag([1.0, 2.0, 3.0, 4.0]))
        assert_array_equal(scn.h, [0.1, 0.1])
        assert_array_equal(scn.W, [[1, 0, 0, 0], [0, 1, 0, 0]])
        assert_array_equal(scn.B, [[1, 0, 0], [0, 1, 0]])

    def test_xi_layout(self):
        inst = default_instance()
        xi = np.zeros(49)
        xi[1] = 1.0    # Q2~[0, 1]
        xi[10] = 1.0   # S2~[0, 0]
        xi[16] = 1.0   # T~[0, 0]
        xi[22] = 1.0   # A~[0, 0]
        xi[26] = 1.0   # d2~[0]
        xi[30] = 1.0   # t2~[0]
        xi[33] = 1.0   # O2~[0, 0]
        xi[45] = 1.0   # h~[0]
        xi[47] = 1.0   # c~[0]
        scn = scenario_from_xi(inst, xi)
        self.assertAlmostEqual(scn.Q2[0, 1], 0.1)
        self.assertAlmostEqual(scn.Q2[1, 0], 0.1)
        self.assertAlmostEqual(scn.S2[0, 0], 0.5 + 0.1)
        self.assertAlmostEqual(scn.T[0, 0], inst.Tbar[0, 0] + 0.1)
        self.assertAlmostEqual(scn.A[0, 0], inst.Abar[0, 0] + 0.1)
        self.assertAlmostEqual(scn.d2[0], inst.dbar2[0] + 0.1)
        self.assertAlmostEqual(scn.t2[0], inst.tbar2[0] + 0.1)
        self.assertAlmostEqual(scn.O2[0, 0], inst.Obar2[0, 0] + 0.1)
        self.assertAlmostEqual(scn.h[0], 0.2)
        self.assertAlmostEqual(scn.c[0], 0.2)

    def test_default_family_is_positive_definite(self):
        inst = default_instance()
        scenarios = sample_scenarios(inst, 50, seed=7)
        self.assertEqual(len(scenarios), 50)
        for scn in scenarios:
            # Gershgorin: 0.5 * 1 - 0.1 * 4
            self.assertGreaterEqual(np.linalg.eigvalsh(scn.Q2)[0], 0.1 - 1e-12)
            self.assertGreaterEqual(np.linalg.eigvalsh(scn.S2)[0], 0.2 - 1e-12)

    def test_smaller_sets_are_prefixes(self):
        inst = default_instance()
        small = sample_scenarios(inst, 5, seed=9)
        large = sample_scenarios(inst, 12, seed=9)
        for a, b in zip(small, large):
            assert_array_equal(a.xi, b.xi)

    def test_indefinite_after_exhausting_attempts(self):
        inst = generate_instance(Dimensions(), tau=1e-3, lb=-1.0, ub=1.0, seed=0)
        with self.assertRaises(IndefiniteScenario):
            sample_scenarios(inst, 20, seed=0, max_attempts=1)


class StrongModulusTests(SimpleTestCase):
    def test_single_scenario(self):
        inst = generate_instance(Dimensions(n2=2, m2=2, l2=1, s2=1), tau=0.5, lb=-1, ub=1, seed=0)
        scn = scenario_from_xi(inst, np.zeros(inst.dims.xi_dim))
        # Q2 = 0.5 * diag(1, 2), S2 = 0.5 * I
        self.assertAlmostEqual(strong_modulus([scn]), 0.5)

    def test_zero_noise(self):
        inst = default_instance()
        scn = scenario_from_xi(inst, np.zeros(49))
        self.assertAlmostEqual(strong_modulus([scn, scn]), 0.5)

    def test_random_bracket_and_probe_property(self):
        inst = default_instance()
        scenarios = sample_scenarios(inst, 50, seed=7)
        sigma = strong_modulus(scenarios)
        self.assertGreaterEqual(sigma, 0.1 - 1e-12)
        self.assertLessEqual(sigma, 0.5)
        rng = np.random.default_rng(0)
        for scn in scenarios:
            for _ in range(100):
                v = rng.normal(size=4)
                self.assertGreaterEqual(v @ scn.Q2 @ v, sigma * (v @ v) - 1e-12)
                w = rng.normal(size=3)
                self.assertGreaterEqual(w @ scn.S2 @ w, sigma * (w @ w) - 1e-12)

    def test_build_saa_problem_certifies_sigma(self):
        prob = build_saa_problem(default_instance(), 10, seed=4)
        self.assertEqual(prob.n, 10)
        self.assertGreater(prob.instance.sigma_lb, 0)
        self.assertAlmostEqual(prob.instance.sigma_lb, strong_modulus(prob.scenarios))

    def test_build_saa_problem_rejects_empty(self):
        with self.assertRaises(InvalidConfig):
            build_saa_problem(default_instance(), 0, seed=4)


class DocumentTests(SimpleTestCase):
    def test_json_document_restores_data_exactly(self):
        prob = build_saa_problem(default_instance(), 3, seed=2)
        restored = problem_from_document(json.loads(json.dumps(problem_to_document(prob))))
        self.assertEqual(restored.seed, prob.seed)
        self.assertEqual(restored.instance.tau, prob.instance.tau)
        self.assertEqual(restored.instance.sigma_lb, prob.instance.sigma_lb)
        assert_array_equal(restored.instance.O1, prob.instance.O1)
        for a, b in zip(restored.scenarios, prob.scenarios):
            assert_array_equal(a.Q2, b.Q2)
            assert_array_equal(a.T, b.T)
            assert_allclose(a.xi, b.xi, rtol=0, atol=0)
