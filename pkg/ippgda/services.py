# ippgda/services.py
"""
Inexact parallel proximal gradient descent-ascent on the SAA problem

    min_{x1 in [lb, ub]}  max_{y1}  F1(x1, y1) + (1/N) sum_i psi2(x1, y1, xi_i)

with F1 = ||x1||_1 - 1/2 x1'Q1x1 + d1'x1 + x1'O1y1 - 1/2 y1'S1y1 - t1'y1.

Each outer iteration solves every second-stage game to a KKT residual
epsilon_k (warm-started from the previous iteration), turns the multipliers
into gradient estimates of the value function and takes one ascent step in
y1 and one proximal descent step in x1, both evaluated at the same iterate.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Sequence

import numpy as np

from apps.core.exceptions import InvalidConfig, MaxIterations, SolverError, add_context
from linalg.dense import Vector, min_singular_value, spectral_norm
from problems.data import ProblemInstance, SaaProblem, Scenario
from second_stage.data import KktPoint, NewtonSettings
from second_stage.services import generalized_jacobian, second_stage_value, semismooth_newton
from ippgda.data import (
    LAMBDA_CONFIGURED,
    IppgdaTrace,
    IterateState,
    RunStatus,
    SolverConfig,
    TraceRecord,
)

logger = logging.getLogger(__name__)

PROGRESS_EVERY = 100
HALVING_WINDOW = 50
HALVING_GROWTH = 10.0
INNER_MAX_ITERS = 10**4


def default_step_size(inst: ProblemInstance) -> float:
    return 0.1 / (1.0 + spectral_norm(inst.Q1) + spectral_norm(inst.O1) + spectral_norm(inst.S1))


def aggregate_gradients(points: Sequence[KktPoint], scns: Sequence[Scenario]) -> tuple[Vector, Vector]:
    """(1/N) sum T_i' pi_x,i and -(1/N) sum A_i' pi_y,i, summed in list order."""
    if not points or len(points) != len(scns):
        raise ValueError(f"need matching non-empty lists, got {len(points)} points and {len(scns)} scenarios")
    vx = np.zeros(scns[0].T.shape[1])
    vy = np.zeros(scns[0].A.shape[1])
    for p, s in zip(points, scns):
        vx += s.T.T @ p.pi_x
        vy -= s.A.T @ p.pi_y
    n = len(points)
    return vx / n, vy / n


def soft_threshold(v: Vector, t: float) -> Vector:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _x_gradient(x1: Vector, y1: Vector, vx: Vector, inst: ProblemInstance) -> Vector:
    # smooth part only; the l1 term goes through the prox
    return -inst.Q1 @ x1 + inst.d1 + inst.O1 @ y1 + vx


def _y_gradient(x1: Vector, y1: Vector, vy: Vector, inst: ProblemInstance) -> Vector:
    return inst.O1.T @ x1 - inst.S1 @ y1 - inst.t1 + vy


def y_step(
    x1: Vector,
    y1: Vector,
    vy: Vector,
    inst: ProblemInstance,
    beta_y: float,
    y_box: tuple[float, float] | None = None,
) -> Vector:
    y = y1 + beta_y * _y_gradient(x1, y1, vy, inst)
    if y_box is not None:
        y = np.clip(y, y_box[0], y_box[1])
    return y


def x_step(x1: Vector, y1: Vector, vx: Vector, inst: ProblemInstance, beta_x: float) -> Vector:
    """Prox of beta*||.||_1 plus the box, applied to a gradient step."""
    w = _x_gradient(x1, y1, vx, inst)
    return np.clip(soft_threshold(x1 - beta_x * w, beta_x), inst.lb, inst.ub)


def residual_value(
    x1: Vector,
    y1: Vector,
    vx: Vector,
    vy: Vector,
    inst: ProblemInstance,
    y_box: tuple[float, float] | None = None,
) -> float:
    """
    Res.val = ||grad_y|| + ||x1 - mid(x1 - eta - w, ub, lb)||, eta being a
    subgradient of ||.||_1 at x1 chosen to make the x-part as small as possible
    where x1 sits on a kink.
    """
    g = _y_gradient(x1, y1, vy, inst)
    if y_box is not None:
        y_part = float(np.linalg.norm(y1 - np.clip(y1 + g, y_box[0], y_box[1])))
    else:
        y_part = float(np.linalg.norm(g))

    w = _x_gradient(x1, y1, vx, inst)
    eta = np.select(
        [x1 < 0, x1 > 0, np.abs(w) <= 1, w > 1],
        [-1.0, 1.0, -w, -1.0],
        default=1.0,
    )
    x_part = float(np.linalg.norm(x1 - np.clip(x1 - eta - w, inst.lb, inst.ub)))
    return y_part + x_part


def delta_schedule(k: int, cfg: SolverConfig) -> float:
    return max(cfg.delta0 * cfg.delta_decay**k, cfg.delta_floor)


def newton_tolerance(delta: float, lambda_lb: float, a_bar: float, t_bar: float, cfg: SolverConfig) -> float:
    """epsilon_k = delta_k sqrt(lambda_lb) / max(a_bar, t_bar), kept in [floor, cap]."""
    scale = max(a_bar, t_bar)
    eps = cfg.newton_tol_cap if scale == 0 else min(cfg.newton_tol_cap, delta * math.sqrt(lambda_lb) / scale)
    return max(eps, cfg.newton_tol_floor)


def estimate_lambda_lb(
    points: Sequence[KktPoint],
    scns: Sequence[Scenario],
    x1: Vector,
    y1: Vector,
    probe_count: int = 20,
) -> float:
    """
    Lower bound on lambda_min(J'J) over the Jacobians at an evenly spaced probe
    of the current second-stage points, halving the smallest singular value.
    """
    n = len(scns)
    idx = np.unique(np.linspace(0, n - 1, min(probe_count, n)).round().astype(int))
    sigma = min(min_singular_value(generalized_jacobian(points[i], scns[i], x1, y1)) for i in idx)
    return (0.5 * sigma) ** 2


def first_stage_value(x1: Vector, y1: Vector, inst: ProblemInstance) -> float:
    return float(
        np.abs(x1).sum() - 0.5 * x1 @ inst.Q1 @ x1 + inst.d1 @ x1 + x1 @ inst.O1 @ y1
        - 0.5 * y1 @ inst.S1 @ y1 - inst.t1 @ y1
    )


def solve_all(
    scns: Sequence[Scenario],
    x1: Vector,
    y1: Vector,
    warm: Sequence[KktPoint | None],
    tol: float,
    newton_cfg: NewtonSettings,
) -> tuple[list[KktPoint], int]:
    """Solve every scenario in order; returns the points and total Newton iterations."""
    points: list[KktPoint] = []
    total = 0
    for i, (scn, mu0) in enumerate(zip(scns, warm)):
        try:
            rep = semismooth_newton(scn, x1, y1, mu0=mu0, tol=tol, cfg=newton_cfg)
        except SolverError as exc:
            add_context(exc, f"scenario {i}")
            raise
        points.append(rep.point)
        total += rep.iterations
    return points, total


def _mean_second_stage(points: Sequence[KktPoint], scns: Sequence[Scenario]) -> float:
    total = 0.0
    for p, s in zip(points, scns):
        total += second_stage_value(p, s)
    return total / len(scns)


def run_ippgda(prob: SaaProblem, x0: Vector, y0: Vector, cfg: SolverConfig) -> IppgdaTrace:
    inst = prob.instance
    scns = prob.scenarios
    x0 = np.asarray(x0, dtype=np.float64)
    y0 = np.asarray(y0, dtype=np.float64)
    if x0.shape != (inst.dims.n1,) or y0.shape != (inst.dims.m1,):
        raise InvalidConfig(f"initial point shapes {x0.shape}, {y0.shape} do not match the instance")
    if np.any(x0 < inst.lb) or np.any(x0 > inst.ub):
        raise InvalidConfig(f"x0 lies outside [{inst.lb}, {inst.ub}]")

    beta_x = cfg.beta_x or default_step_size(inst)
    beta_y = cfg.beta_y or default_step_size(inst)
    a_bar = max(spectral_norm(s.A) for s in scns)
    t_bar = max(spectral_norm(s.T) for s in scns)
    newton_cfg = cfg.newton_settings()
    lambda_lb = cfg.lambda_lb_value if cfg.lambda_lb_mode == LAMBDA_CONFIGURED else math.inf

    state = IterateState(k=0, x1=x0.copy(), y1=y0.copy(), warm_starts=[KktPoint.zeros(s) for s in scns])
    trace = IppgdaTrace()
    last_halving = 0

    while True:
        k = state.k
        state.delta_k = delta_schedule(k, cfg)
        if cfg.lambda_lb_mode != LAMBDA_CONFIGURED:
            # running minimum keeps epsilon_k nonincreasing
            lambda_lb = min(
                lambda_lb,
                estimate_lambda_lb(state.warm_starts, scns, state.x1, state.y1, cfg.lambda_probe_count),
            )
        eps = newton_tolerance(state.delta_k, lambda_lb, a_bar, t_bar, cfg)

        try:
            state.warm_starts, newton_iters = solve_all(scns, state.x1, state.y1, state.warm_starts, eps, newton_cfg)
        except SolverError as exc:
            add_context(exc, f"outer iteration {k}")
            raise

        state.vx_tilde, state.vy_tilde = aggregate_gradients(state.warm_starts, scns)
        state.resval = residual_value(state.x1, state.y1, state.vx_tilde, state.vy_tilde, inst, cfg.y_box)
        objective = first_stage_value(state.x1, state.y1, inst) + _mean_second_stage(state.warm_starts, scns)
        trace.records.append(TraceRecord(
            k=k,
            resval=state.resval,
            delta=state.delta_k,
            objective=objective,
            newton_iters=newton_iters,
            epsilon=eps,
            lambda_lb=lambda_lb,
            beta_x=beta_x,
            beta_y=beta_y,
            x1=state.x1.copy(),
            y1=state.y1.copy(),
            vx=state.vx_tilde.copy(),
            vy=state.vy_tilde.copy(),
        ))

        if k % PROGRESS_EVERY == 0:
            logger.info("ippgda k=%d resval=%.3e objective=%.6f eps=%.1e", k, state.resval, objective, eps)
        if state.resval <= cfg.resval_tol:
            trace.status = RunStatus.CONVERGED
            break
        if k >= cfg.max_outer_iters:
            trace.status = RunStatus.MAX_ITERS
            break

        if (
            cfg.halve_on_divergence
            and k >= HALVING_WINDOW
            and k - last_halving >= HALVING_WINDOW
            and state.resval > HALVING_GROWTH * trace.records[k - HALVING_WINDOW].resval
        ):
            beta_x, beta_y = beta_x / 2, beta_y / 2
            last_halving = k
            logger.warning("resval grew %.0fx over %d iterations at k=%d; halving steps to %.3e / %.3e",
                           HALVING_GROWTH, HALVING_WINDOW, k, beta_x, beta_y)

        # both steps read the same (x1^k, y1^k)
        y_next = y_step(state.x1, state.y1, state.vy_tilde, inst, beta_y, cfg.y_box)
        x_next = x_step(state.x1, state.y1, state.vx_tilde, inst, beta_x)
        state.x1, state.y1 = x_next, y_next
        state.k += 1

    trace.x1, trace.y1 = state.x1, state.y1
    logger.info("ippgda finished: status=%s iterations=%d resval=%.3e",
                trace.status, trace.iterations, trace.final.resval)
    return trace


def _psi(x1: Vector, y1: Vector, prob: SaaProblem, tol: float, warm=None, newton_cfg: NewtonSettings | None = None):
    scns = prob.scenarios
    warm = warm if warm is not None else [None] * len(scns)
    points, _ = solve_all(scns, x1, y1, warm, tol, newton_cfg or NewtonSettings())
    value = first_stage_value(x1, y1, prob.instance) + _mean_second_stage(points, scns)
    return value, points


def saa_objective(x1: Vector, y1: Vector, prob: SaaProblem, tol: float) -> float:
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    return _psi(np.asarray(x1, float), np.asarray(y1, float), prob, tol)[0]


def inner_max(
    x1: Vector,
    prob: SaaProblem,
    tol: float,
    y_box: tuple[float, float] | None = None,
    max_iter: int = INNER_MAX_ITERS,
    y0: Vector | None = None,
) -> tuple[Vector, float]:
    """
    Maximise psi_N(x1, .) by projected gradient ascent with Barzilai-Borwein
    steps and an Armijo backtrack on the value. Second stages are solved at
    tol/10 and warm-started across evaluations. Returns (y1, Psi_N(x1)).
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    inst = prob.instance
    scns = prob.scenarios
    x1 = np.asarray(x1, dtype=np.float64)
    inner_tol = tol / 10

    def project(y):
        return y if y_box is None else np.clip(y, y_box[0], y_box[1])

    def evaluate(y, warm):
        value, points = _psi(x1, y, prob, inner_tol, warm)
        _, vy = aggregate_gradients(points, scns)
        return value, _y_gradient(x1, y, vy, inst), points

    def stationarity(y, g):
        return float(np.linalg.norm(project(y + g) - y))

    y = project(np.zeros(inst.dims.m1) if y0 is None else np.asarray(y0, dtype=np.float64))
    value, g, points = evaluate(y, None)
    alpha = 1.0 / max(spectral_norm(inst.S1), 1.0)

    for _ in range(max_iter):
        if stationarity(y, g) <= tol:
            return y, value
        slack = 1e-12 * (1.0 + abs(value))
        step = alpha
        for _backtrack in range(40):
            y_new = project(y + step * g)
            value_new, g_new, points_new = evaluate(y_new, points)
            if value_new >= value + 1e-4 * float(g @ (y_new - y)) - slack:
                break
            step *= 0.5
        s, r = y_new - y, g_new - g
        curvature = -float(s @ r)
        alpha = float(s @ s) / curvature if curvature > 0 else 2.0 * step
        alpha = min(max(alpha, 1e-8), 1e8)
        y, value, g, points = y_new, value_new, g_new, points_new

    raise MaxIterations(
        f"inner maximisation did not reach tol {tol:.1e} in {max_iter} iterations",
        iterations=max_iter,
        residual=stationarity(y, g),
    )
