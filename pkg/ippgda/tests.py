from dataclasses import replace
from unittest import mock

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from apps.core.exceptions import InvalidConfig, MaxIterations
from apps.core.seeding import make_rng
from problems.data import Dimensions, SaaProblem, Scenario
from problems.services import build_saa_problem, generate_instance
from second_stage.data import KktPoint
from second_stage.services import semismooth_newton
from ippgda.data import RunStatus, SolverConfig
from ippgda.services import (
    aggregate_gradients,
    delta_schedule,
    first_stage_value,
    inner_max,
    newton_tolerance,
    residual_value,
    run_ippgda,
    saa_objective,
    soft_threshold,
    x_step,
    y_step,
)

BOX = (-10.0, 10.0)
DESCENT_WINDOW = 10


def base_instance(dims=None, seed=3, **overrides):
    inst = generate_instance(dims or Dimensions(), tau=0.5, lb=BOX[0], ub=BOX[1], seed=seed)
    return replace(inst, **overrides) if overrides else inst


def quiet_instance(dims=None, **overrides):
    """No first-stage coupling: O1 = 0, d1 = 0, t1 = 0."""
    dims = dims or Dimensions()
    fields = {
        "O1": np.zeros((dims.n1, dims.m1)),
        "d1": np.zeros(dims.n1),
        "t1": np.zeros(dims.m1),
    }
    fields.update(overrides)
    return base_instance(dims, **fields)


def with_inactive_constraints(prob: SaaProblem) -> SaaProblem:
    scns = tuple(replace(s, h=np.full(s.l2, 1e6), c=np.full(s.s2, 1e6)) for s in prob.scenarios)
    return replace(prob, scenarios=scns)


def linking_scenario(T, A):
    """Second stage with identity quadratics; only T and A matter for aggregation."""
    l2, n1 = T.shape
    s2, m1 = A.shape
    return Scenario(
        Q2=np.eye(l2), S2=np.eye(s2), O2=np.zeros((l2, s2)), T=np.asarray(T, float), A=np.asarray(A, float),
        d2=np.zeros(l2), t2=np.zeros(s2), h=np.zeros(l2), c=np.zeros(s2), W=np.eye(l2), B=np.eye(s2),
    )


def multipliers(pi_x, pi_y):
    pi_x, pi_y = np.asarray(pi_x, float), np.asarray(pi_y, float)
    return KktPoint(np.zeros(len(pi_x)), np.zeros(len(pi_y)), pi_x, pi_y)


def initial_point(seed, inst):
    rng = make_rng(seed, 2)
    x0 = np.clip(rng.uniform(7.0, 10.0, size=inst.dims.n1), inst.lb, inst.ub)
    return x0, rng.uniform(0.0, 1.0, size=inst.dims.m1)


class AggregateGradientsTests(SimpleTestCase):
    def test_single_scenario(self):
        scn = linking_scenario(np.eye(2), np.eye(2))
        vx, vy = aggregate_gradients([multipliers([1, 2], [0, 0])], [scn])
        assert_allclose(vx, [1, 2])
        assert_allclose(vy, [0, 0])

    def test_inactive_constraints(self):
        scn = linking_scenario(np.ones((2, 3)), np.ones((2, 2)))
        vx, vy = aggregate_gradients([multipliers([0, 0], [0, 0])] * 3, [scn] * 3)
        assert_allclose(vx, np.zeros(3))
        assert_allclose(vy, np.zeros(2))

    def test_averages_max_player_terms(self):
        scn = linking_scenario(np.eye(2), np.eye(2))
        points = [multipliers([0, 0], [1, 0]), multipliers([0, 0], [3, 0])]
        _, vy = aggregate_gradients(points, [scn, scn])
        assert_allclose(vy, [-2, 0])

    def test_length_mismatch(self):
        scn = linking_scenario(np.eye(2), np.eye(2))
        with self.assertRaises(ValueError):
            aggregate_gradients([multipliers([0, 0], [0, 0])], [scn, scn])
        with self.assertRaises(ValueError):
            aggregate_gradients([], [])


class FirstStageStepTests(SimpleTestCase):
    def setUp(self):
        self.inst = quiet_instance(Q1=np.zeros((3, 3)), S1=np.eye(2))

    def test_y_step_fixed_point(self):
        y = y_step(np.zeros(3), np.zeros(2), np.zeros(2), self.inst, 0.7)
        assert_allclose(y, np.zeros(2))

    def test_y_step_exact_ascent(self):
        y = y_step(np.zeros(3), np.ones(2), np.zeros(2), self.inst, 1.0)
        assert_allclose(y, np.zeros(2))

    def test_y_step_bound(self):
        inst = base_instance()
        rng = np.random.default_rng(0)
        for beta in (1e-1, 1e-3, 1e-6):
            x, y, vy = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
            grad = inst.O1.T @ x - inst.S1 @ y - inst.t1 + vy
            moved = np.linalg.norm(y_step(x, y, vy, inst, beta) - y)
            self.assertLessEqual(moved, beta * np.linalg.norm(grad) * (1 + 1e-12))

    def test_y_step_box(self):
        y = y_step(np.zeros(3), np.array([5.0, -5.0]), np.zeros(2), self.inst, 0.1, y_box=(-1.0, 1.0))
        assert_allclose(y, [1.0, -1.0])

    def test_x_step_pure_shrinkage(self):
        x = x_step(np.array([3.0, -4.0, 5.0]), np.zeros(2), np.zeros(3), self.inst, 0.5)
        assert_allclose(x, [2.5, -3.5, 4.5])

    def test_x_step_clamps_after_shrinking(self):
        x = x_step(np.array([20.0, 0.0, 0.0]), np.zeros(2), np.zeros(3), self.inst, 1.0)
        assert_allclose(x, [10.0, 0.0, 0.0])

    def test_soft_threshold(self):
        assert_allclose(soft_threshold(np.array([-2.0, -0.5, 0.0, 0.5, 2.0]), 1.0), [-1, 0, 0, 0, 1])

    def test_x_step_matches_grid_search(self):
        dims = Dimensions(n1=1, m1=1, n2=1, m2=1, l2=1, s2=1)
        base = quiet_instance(dims, Q1=np.zeros((1, 1)))
        rng = np.random.default_rng(2024)
        for case in range(200):
            v = rng.uniform(-5, 5)
            beta = rng.uniform(0.01, 2.0)
            width = rng.uniform(0.1, 3.0)
            kind = case % 3
            if kind == 0:
                lb = rng.uniform(0.01, 3.0)
            elif kind == 1:
                lb = -rng.uniform(0.01, 3.0) - width
            else:
                lb = -rng.uniform(0.0, width)
            ub = lb + width
            inst = replace(base, lb=lb, ub=ub)
            closed = x_step(np.array([v]), np.zeros(1), np.zeros(1), inst, beta)[0]
            grid = np.linspace(lb, ub, int(np.ceil(width / 1e-4)) + 1)
            best = grid[np.argmin(beta * np.abs(grid) + 0.5 * (grid - v) ** 2)]
            self.assertLessEqual(abs(closed - best), 1e-3, msg=f"v={v} beta={beta} box=[{lb}, {ub}]")


class ResidualValueTests(SimpleTestCase):
    def resval(self, x1, d1):
        inst = quiet_instance(Q1=np.zeros((3, 3)), S1=np.eye(2), d1=np.asarray(d1, float))
        return residual_value(np.asarray(x1, float), np.zeros(2), np.zeros(3), np.zeros(2), inst)

    def test_zero_at_stationary_point(self):
        self.assertEqual(self.resval([0, 0, 0], [0, 0, 0]), 0.0)

    def test_kink_with_small_gradient(self):
        self.assertEqual(self.resval([0, 0, 0], [0.5, 0, 0]), 0.0)

    def test_kink_with_large_gradient(self):
        self.assertAlmostEqual(self.resval([0, 0, 0], [0, 2, 0]), 1.0)
        self.assertAlmostEqual(self.resval([0, 0, 0], [0, 0, -3]), 2.0)

    def test_y_part(self):
        inst = quiet_instance(S1=np.eye(2))
        r = residual_value(np.zeros(3), np.array([3.0, 4.0]), np.zeros(3), np.zeros(2), inst)
        self.assertAlmostEqual(r, 5.0)


class ScheduleTests(SimpleTestCase):
    def test_delta_arithmetic(self):
        self.assertAlmostEqual(delta_schedule(3, SolverConfig()), 1.25e-3)
        self.assertEqual(delta_schedule(0, SolverConfig()), 1e-2)

    def test_delta_monotone_with_floor(self):
        cfg = SolverConfig(delta_decay=0.3)
        deltas = [delta_schedule(k, cfg) for k in range(200)]
        for prev, cur in zip(deltas, deltas[1:]):
            self.assertLessEqual(cur, prev)
            self.assertGreaterEqual(cur, cfg.delta_floor)
            if cur > cfg.delta_floor:
                self.assertGreaterEqual((prev / cur) ** 2, 9.0)
        self.assertEqual(deltas[-1], cfg.delta_floor)

    def test_newton_tolerance(self):
        cfg = SolverConfig(newton_tol_cap=1.0)
        self.assertAlmostEqual(newton_tolerance(1e-2, 0.25, 2.0, 1.0, cfg), 2.5e-3)
        self.assertEqual(newton_tolerance(1e-2, 0.25, 2.0, 1.0, SolverConfig()), 1e-6)
        self.assertEqual(newton_tolerance(1e-30, 0.25, 2.0, 1.0, SolverConfig()), 1e-12)
        self.assertEqual(newton_tolerance(1e-2, 0.25, 0.0, 0.0, SolverConfig()), 1e-6)

    def test_config_validation(self):
        for bad in (
            {"beta_x": 0.0},
            {"delta_decay": 1.0},
            {"resval_tol": 0.0},
            {"lambda_lb_mode": "configured"},
            {"lambda_lb_mode": "guessed"},
            {"ls_ratio": 0.5},
            {"y_box": (1.0, 0.0)},
        ):
            with self.assertRaises(InvalidConfig, msg=str(bad)):
                SolverConfig(**bad)


class ObjectiveTests(SimpleTestCase):
    def tiny_problem(self, scn):
        dims = Dimensions(n1=1, m1=1, n2=1, m2=1, l2=1, s2=1)
        inst = quiet_instance(dims, Q1=np.zeros((1, 1)), S1=np.zeros((1, 1)))
        return SaaProblem(instance=inst, scenarios=(scn,), seed=0)

    def test_all_zero(self):
        zero = np.zeros((1, 1))
        scn = Scenario(
            Q2=zero, S2=zero, O2=zero, T=zero, A=zero, d2=np.zeros(1), t2=np.zeros(1),
            h=np.zeros(1), c=np.zeros(1), W=np.eye(1), B=np.eye(1),
        )
        self.assertEqual(saa_objective(np.zeros(1), np.zeros(1), self.tiny_problem(scn), 1e-10), 0.0)
        self.assertEqual(first_stage_value(np.zeros(1), np.zeros(1), self.tiny_problem(scn).instance), 0.0)

    def test_toy_second_stage(self):
        one = np.eye(1)
        scn = Scenario(
            Q2=one, S2=one, O2=np.zeros((1, 1)), T=np.zeros((1, 1)), A=np.zeros((1, 1)),
            d2=np.array([-1.0]), t2=np.zeros(1), h=np.array([0.1]), c=np.array([0.1]), W=one, B=one,
        )
        prob = self.tiny_problem(scn)
        x1, y1 = np.array([0.3]), np.array([-0.2])
        expected = first_stage_value(x1, y1, prob.instance) - 0.095
        self.assertAlmostEqual(saa_objective(x1, y1, prob, 1e-12), expected, places=12)

    def test_scenario_order(self):
        prob = build_saa_problem(base_instance(), 10, seed=4)
        shuffled = replace(prob, scenarios=tuple(reversed(prob.scenarios)))
        x1, y1 = np.array([0.5, -0.2, 1.0]), np.array([0.1, 0.3])
        self.assertLessEqual(abs(saa_objective(x1, y1, prob, 1e-12) - saa_objective(x1, y1, shuffled, 1e-12)), 1e-12)


class InnerMaxTests(SimpleTestCase):
    def test_uncoupled_maximiser_is_zero(self):
        prob = with_inactive_constraints(build_saa_problem(quiet_instance(), 3, seed=5))
        y, _ = inner_max(np.array([1.0, -2.0, 0.5]), prob, tol=1e-8)
        assert_allclose(y, np.zeros(2), atol=1e-7)

    def test_matches_linear_solve_when_constraints_are_slack(self):
        S1 = np.array([[2.0, 0.5], [0.5, 1.0]])
        prob = with_inactive_constraints(build_saa_problem(base_instance(S1=S1), 3, seed=5))
        inst = prob.instance
        x1 = np.array([1.0, -0.5, 0.25])
        y, _ = inner_max(x1, prob, tol=1e-9)
        assert_allclose(y, np.linalg.solve(S1, inst.O1.T @ x1 - inst.t1), atol=1e-6)

    def test_max_dominance(self):
        prob = build_saa_problem(base_instance(), 5, seed=6)
        rng = np.random.default_rng(6)
        x1 = rng.uniform(-1, 1, 3)
        _, best = inner_max(x1, prob, tol=1e-8)
        for _ in range(50):
            y = rng.uniform(-2, 2, 2)
            self.assertGreaterEqual(best, saa_objective(x1, y, prob, 1e-10) - 1e-9)

    def test_box(self):
        prob = build_saa_problem(base_instance(), 3, seed=6)
        y, _ = inner_max(np.array([5.0, 5.0, 5.0]), prob, tol=1e-8, y_box=(-0.1, 0.1))
        self.assertTrue(np.all(np.abs(y) <= 0.1))


class RunIppgdaTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.prob = build_saa_problem(base_instance(), 5, seed=8)
        cls.x0, cls.y0 = initial_point(8, cls.prob.instance)
        cls.cfg = SolverConfig(resval_tol=1e-6, newton_tol_cap=1e-10)
        cls.trace = run_ippgda(cls.prob, cls.x0, cls.y0, cls.cfg)

    def test_already_stationary(self):
        prob = with_inactive_constraints(build_saa_problem(quiet_instance(), 1, seed=1))
        trace = run_ippgda(prob, np.zeros(3), np.zeros(2), SolverConfig())
        self.assertEqual(trace.status, RunStatus.CONVERGED)
        self.assertEqual(trace.iterations, 1)
        self.assertEqual(trace.final.resval, 0.0)

    def test_rejects_infeasible_start(self):
        with self.assertRaises(InvalidConfig):
            run_ippgda(self.prob, np.full(3, 11.0), self.y0, SolverConfig())

    def test_converges(self):
        self.assertEqual(self.trace.status, RunStatus.CONVERGED)
        self.assertLessEqual(self.trace.final.resval, 1e-6)
        self.assertLessEqual(self.trace.iterations, self.cfg.max_outer_iters + 1)

    def test_trace_invariants(self):
        lb, ub = self.prob.instance.lb, self.prob.instance.ub
        records = self.trace.records
        self.assertEqual([r.k for r in records], list(range(len(records))))
        for r in records:
            self.assertTrue(np.all(r.x1 >= lb) and np.all(r.x1 <= ub))
        for prev, cur in zip(records, records[1:]):
            self.assertLessEqual(cur.delta, prev.delta)
            self.assertLessEqual(cur.epsilon, prev.epsilon)
            self.assertLessEqual(cur.lambda_lb, prev.lambda_lb)

    def test_iteration_cap(self):
        trace = run_ippgda(self.prob, self.x0, self.y0, SolverConfig(max_outer_iters=3))
        self.assertEqual(trace.status, RunStatus.MAX_ITERS)
        self.assertEqual(trace.iterations, 4)

    def test_deterministic(self):
        again = run_ippgda(self.prob, self.x0, self.y0, SolverConfig(max_outer_iters=30))
        first = run_ippgda(self.prob, self.x0, self.y0, SolverConfig(max_outer_iters=30))
        self.assertEqual([r.csv_row() for r in first.records], [r.csv_row() for r in again.records])

    def test_stationarity_survives_fresh_solves(self):
        last = self.trace.final
        points = [semismooth_newton(s, last.x1, last.y1, tol=1e-12).point for s in self.prob.scenarios]
        vx, vy = aggregate_gradients(points, self.prob.scenarios)
        fresh = residual_value(last.x1, last.y1, vx, vy, self.prob.instance)
        self.assertLessEqual(abs(fresh - last.resval), 1e-6)

    def test_descent_over_ten_iteration_windows(self):
        # single steps may raise Psi early on; ten steps apart it must not
        records = self.trace.records
        self.assertGreater(len(records), 2 * DESCENT_WINDOW)
        sampled = records[::DESCENT_WINDOW]
        values = [inner_max(r.x1, self.prob, tol=1e-8, y0=r.y1)[1] for r in sampled]
        for rec, prev, cur in zip(sampled, values, values[1:]):
            self.assertLessEqual(cur, prev + 1e-6, msg=f"k={rec.k}")

    def test_inner_failure_carries_context(self):
        with mock.patch("ippgda.services.semismooth_newton", side_effect=MaxIterations("stuck")):
            with self.assertRaises(MaxIterations) as ctx:
                run_ippgda(self.prob, self.x0, self.y0, SolverConfig())
        notes = getattr(ctx.exception, "__notes__", [])
        self.assertIn("scenario 0", notes)
        self.assertIn("outer iteration 0", notes)

    def test_box_constrained_y(self):
        cfg = SolverConfig(y_box=(0.0, 0.5), max_outer_iters=50)
        trace = run_ippgda(self.prob, self.x0, self.y0, cfg)
        for r in trace.records:
            self.assertTrue(np.all(r.y1 >= 0.0) and np.all(r.y1 <= 0.5))

    def test_halving_safeguard(self):
        cfg = SolverConfig(
            beta_x=2.2, beta_y=2.2, max_outer_iters=60,
            newton_tol_cap=1e-6, newton_tol_floor=1e-6,
        )
        with self.assertLogs("ippgda.services", level="WARNING"):
            trace = run_ippgda(self.prob, self.x0, self.y0, cfg)
        self.assertLess(trace.final.beta_y, 2.2)

    def test_desk_configuration(self):
        prob = build_saa_problem(base_instance(seed=1), 50, seed=1)
        x0, y0 = initial_point(1, prob.instance)
        trace = run_ippgda(prob, x0, y0, SolverConfig())
        self.assertEqual(trace.status, RunStatus.CONVERGED)
        self.assertLessEqual(trace.final.resval, 1e-4)
