import itertools
import json
from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from apps.core.exceptions import MaxIterations
from linalg.dense import min_singular_value
from problems.data import Dimensions, Scenario
from problems.services import generate_instance, sample_scenarios
from second_stage.data import KktPoint, NewtonSettings
from second_stage.services import (
    QuadraticSaddle,
    extragradient_oracle,
    generalized_jacobian,
    kkt_residual,
    multiplier_gradients,
    second_stage_value,
    semismooth_newton,
    unconstrained_saddle,
)


def toy_scenario(h=0.1, c=0.1):
    """F2 = x^2/2 - x - y^2/2 with x2 <= h, y2 <= c and no first-stage coupling."""
    one = np.array([[1.0]])
    return Scenario(
        Q2=one, S2=one, O2=np.zeros((1, 1)), T=np.zeros((1, 1)), A=np.zeros((1, 1)),
        d2=np.array([-1.0]), t2=np.zeros(1), h=np.array([h]), c=np.array([c]),
        W=one, B=one,
    )


def point(x2, y2, pi_x, pi_y):
    return KktPoint(np.array([x2]), np.array([y2]), np.array([pi_x]), np.array([pi_y]))


ZERO = np.zeros(1)
# u_ii values sampled from [0, 1]; the least singular value over the whole
# cube can sit below the grid minimum, hence the safety factor
BRANCH_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
BRANCH_GRID_SAFETY = 0.5
ORACLE_SLACK = 1e-6


def random_family(count=100, seed=7):
    inst = generate_instance(Dimensions(), tau=0.5, lb=-10.0, ub=10.0, seed=seed)
    scenarios = sample_scenarios(inst, count, seed=seed)
    rng = np.random.default_rng(seed)
    for scn in scenarios:
        yield scn, rng.uniform(-1, 1, size=3), rng.uniform(-1, 1, size=2)


class KktResidualTests(SimpleTestCase):
    def test_all_zero_data(self):
        zero = np.zeros((1, 1))
        scn = Scenario(
            Q2=zero, S2=zero, O2=zero, T=zero, A=zero, d2=ZERO, t2=ZERO, h=ZERO, c=ZERO,
            W=np.eye(1), B=np.eye(1),
        )
        assert_allclose(kkt_residual(point(0, 0, 0, 0), scn, ZERO, ZERO), np.zeros(4))

    def test_active_bound(self):
        r = kkt_residual(point(0.1, 0.0, 0.9, 0.0), toy_scenario(), ZERO, ZERO)
        assert_allclose(r, np.zeros(4), atol=1e-15)

    def test_inactive_bound(self):
        r = kkt_residual(point(1.0, 0.0, 0.0, 0.0), toy_scenario(h=10.0), ZERO, ZERO)
        assert_allclose(r, np.zeros(4), atol=1e-15)


class GeneralizedJacobianTests(SimpleTestCase):
    def test_slack_branch_row(self):
        j = generalized_jacobian(point(0.1, 0.0, 0.9, 0.0), toy_scenario(), ZERO, ZERO)
        assert_allclose(j[2], [-1, 0, 0, 0])
        # pi_y = 0 <= slack 0.1 takes the multiplier branch
        assert_allclose(j[3], [0, 0, 0, 1])

    def test_inactive_constraints_give_identity_block(self):
        j = generalized_jacobian(point(0.0, 0.0, 0.0, 0.0), toy_scenario(h=10.0, c=10.0), ZERO, ZERO)
        assert_allclose(j[2:, :2], np.zeros((2, 2)))
        assert_allclose(j[2:, 2:], np.eye(2))

    def test_tie_takes_multiplier_branch(self):
        # pi_x = slack_x = 0
        j = generalized_jacobian(point(0.1, 0.0, 0.0, 0.0), toy_scenario(), ZERO, ZERO)
        assert_allclose(j[2], [0, 0, 1, 0])

    def test_nonsingular_at_random_points(self):
        rng = np.random.default_rng(1)
        for scn, x1, y1 in random_family(30):
            for _ in range(5):
                mu = KktPoint.from_vector(rng.normal(scale=3.0, size=11), scn)
                self.assertGreater(min_singular_value(generalized_jacobian(mu, scn, x1, y1)), 1e-8)


class SemismoothNewtonTests(SimpleTestCase):
    def test_toy_from_cold_start(self):
        rep = semismooth_newton(toy_scenario(), ZERO, ZERO, tol=1e-12)
        assert_allclose(rep.point.as_vector(), [0.1, 0.0, 0.9, 0.0], atol=1e-12)
        self.assertLessEqual(rep.residual_norm, 1e-12)
        self.assertEqual(len(rep.residual_history), rep.iterations + 1)

    def test_start_at_solution(self):
        rep = semismooth_newton(toy_scenario(), ZERO, ZERO, mu0=point(0.1, 0.0, 0.9, 0.0), tol=1e-12)
        self.assertEqual(rep.iterations, 0)
        self.assertEqual(len(rep.residual_history), 1)
        self.assertLessEqual(rep.residual_history[0], 1e-12)

    def test_iteration_cap(self):
        with self.assertRaises(MaxIterations):
            semismooth_newton(toy_scenario(), ZERO, ZERO, tol=1e-12, cfg=NewtonSettings(max_iter=1))

    def test_custom_saddle_function(self):
        # F2 from another scenario, constraints from the toy: x2 = 0.05 stays interior
        scn = toy_scenario()
        f2 = QuadraticSaddle(replace(scn, d2=np.array([-0.05])))
        rep = semismooth_newton(scn, ZERO, ZERO, tol=1e-12, f2=f2)
        assert_allclose(rep.point.as_vector(), [0.05, 0.0, 0.0, 0.0], atol=1e-12)
        self.assertLessEqual(np.linalg.norm(kkt_residual(rep.point, scn, ZERO, ZERO, f2=f2)), 1e-12)
        self.assertGreater(np.linalg.norm(kkt_residual(rep.point, scn, ZERO, ZERO)), 0.01)

    def test_random_family_converges_and_matches_oracle(self):
        for scn, x1, y1 in random_family():
            rep = semismooth_newton(scn, x1, y1, tol=1e-10)
            self.assertLessEqual(rep.residual_norm, 1e-10)
            self.assertLessEqual(rep.iterations, 30)
            self.assertTrue(all(r > 0 for r in rep.residual_history[:-1]))
            ref = extragradient_oracle(scn, x1, y1, tol=1e-9)
            diff = np.concatenate([rep.point.x2 - ref.x2, rep.point.y2 - ref.y2])
            self.assertLessEqual(np.linalg.norm(diff), 1e-6)

    def test_terminal_step_and_unit_steps(self):
        # H is piecewise affine here: once the active set settles, one full
        # Newton step lands on the root, so the tail ends in one tiny ratio
        with_tail = 0
        for scn, x1, y1 in random_family():
            rep = semismooth_newton(scn, x1, y1, tol=1e-10)
            hist = rep.residual_history
            if rep.iterations == 0:
                continue
            ratios = [b / a for a, b in zip(hist, hist[1:])]
            self.assertLess(ratios[-1], 0.1)
            self.assertEqual(rep.step_sizes[-1], 1.0)
            if len(ratios) >= 3:
                with_tail += 1
                self.assertLess(ratios[-1], min(ratios[-3], ratios[-2]))
            for r, alpha in zip(hist, rep.step_sizes):
                if r < 1e-4:
                    self.assertEqual(alpha, 1.0)
        self.assertGreater(with_tail, 0)

    def test_error_bound_from_jacobian_singular_values(self):
        for scn, x1, y1 in itertools.islice(random_family(), 10):
            rep = semismooth_newton(scn, x1, y1, tol=1e-12, keep_iterates=True)
            star = extragradient_oracle(scn, x1, y1, tol=1e-9)
            sigma = min(
                min_singular_value(generalized_jacobian(star, scn, x1, y1, branch=np.array(u)))
                for u in itertools.product(BRANCH_GRID, repeat=scn.l2 + scn.s2)
            )
            bound = 1.0 / (BRANCH_GRID_SAFETY * sigma)
            for mu, r in zip(rep.iterates, rep.residual_history):
                self.assertLessEqual(np.linalg.norm(mu - star.as_vector()), bound * r + ORACLE_SLACK)

    def test_report_json_line(self):
        rep = semismooth_newton(toy_scenario(), ZERO, ZERO, tol=1e-12)
        row = json.loads(rep.to_json_line(3))
        self.assertEqual(row["scenario"], 3)
        self.assertEqual(row["iterations"], rep.iterations)


class ExtragradientOracleTests(SimpleTestCase):
    def test_toy(self):
        p = extragradient_oracle(toy_scenario(), ZERO, ZERO, tol=1e-10)
        assert_allclose(p.as_vector(), [0.1, 0.0, 0.9, 0.0], atol=1e-8)

    def test_interior_case_matches_linear_solve(self):
        inst = generate_instance(Dimensions(), tau=0.5, lb=-10.0, ub=10.0, seed=3)
        base = sample_scenarios(inst, 1, seed=3)[0]
        scn = Scenario(
            Q2=base.Q2, S2=base.S2, O2=base.O2, T=base.T, A=base.A, d2=base.d2, t2=base.t2,
            h=np.full(2, 1e6), c=np.full(2, 1e6), W=base.W, B=base.B,
        )
        ref = unconstrained_saddle(scn)
        p = extragradient_oracle(scn, np.zeros(3), np.zeros(2), tol=1e-10)
        assert_allclose(p.x2, ref.x2, atol=1e-7)
        assert_allclose(p.y2, ref.y2, atol=1e-7)
        assert_allclose(p.pi_x, 0.0, atol=1e-8)
        assert_allclose(p.pi_y, 0.0, atol=1e-8)

    def test_residual_at_oracle_output(self):
        for scn, x1, y1 in itertools.islice(random_family(seed=11), 20):
            p = extragradient_oracle(scn, x1, y1, tol=1e-8)
            self.assertLessEqual(np.linalg.norm(kkt_residual(p, scn, x1, y1)), 1e-7)

    def test_refuses_general_selectors(self):
        scn = toy_scenario()
        bent = Scenario(
            Q2=scn.Q2, S2=scn.S2, O2=scn.O2, T=scn.T, A=scn.A, d2=scn.d2, t2=scn.t2,
            h=scn.h, c=scn.c, W=np.array([[2.0]]), B=scn.B,
        )
        with self.assertRaises(ValueError):
            extragradient_oracle(bent, ZERO, ZERO)


class SecondStageValueTests(SimpleTestCase):
    def test_zero(self):
        zero = np.zeros((1, 1))
        scn = Scenario(
            Q2=zero, S2=zero, O2=zero, T=zero, A=zero, d2=ZERO, t2=ZERO, h=ZERO, c=ZERO,
            W=np.eye(1), B=np.eye(1),
        )
        self.assertEqual(second_stage_value(point(0, 0, 0, 0), scn), 0.0)

    def test_toy_solution(self):
        self.assertAlmostEqual(second_stage_value(point(0.1, 0.0, 0.9, 0.0), toy_scenario()), -0.095)

    def test_multiplier_gradient_identity(self):
        h = 1e-5
        checked = 0

        def solve(scn, x1, y1):
            return semismooth_newton(scn, x1, y1, tol=1e-12).point

        def active(p, scn, x1, y1):
            return tuple(np.diag(generalized_jacobian(p, scn, x1, y1))[-4:] > 0.5)

        for scn, x1, y1 in itertools.islice(random_family(seed=5), 20):
            base = solve(scn, x1, y1)
            gx, gy = multiplier_gradients(base, scn)
            for j in range(3):
                e = np.zeros(3)
                e[j] = h
                plus, minus = solve(scn, x1 + e, y1), solve(scn, x1 - e, y1)
                if active(plus, scn, x1 + e, y1) != active(minus, scn, x1 - e, y1):
                    continue
                fd = (second_stage_value(plus, scn) - second_stage_value(minus, scn)) / (2 * h)
                self.assertLessEqual(abs(fd - gx[j]), 1e-4 * max(1.0, abs(gx[j])))
                checked += 1
            for j in range(2):
                e = np.zeros(2)
                e[j] = h
                plus, minus = solve(scn, x1, y1 + e), solve(scn, x1, y1 - e)
                if active(plus, scn, x1, y1 + e) != active(minus, scn, x1, y1 - e):
                    continue
                fd = (second_stage_value(plus, scn) - second_stage_value(minus, scn)) / (2 * h)
                self.assertLessEqual(abs(fd - gy[j]), 1e-4 * max(1.0, abs(gy[j])))
        self.assertGreater(checked, 40)
