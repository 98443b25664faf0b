# second_stage/services.py
"""
Second-stage saddle problems.

For fixed first-stage decisions (x1, y1) and a scenario, the strongly
convex-strongly concave game

    min_{x2: T x1 + W x2 <= h}  max_{y2: A y1 + B y2 <= c}  F2(x2, y2)

is solved through its KKT system H(mu) = 0 written with the componentwise min
of multipliers and slacks. H is semismooth; semismooth_newton works on it with
an element of its generalized Jacobian and a merit-function line search.
extragradient_oracle solves the same game by projections and is only used to
cross-check.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from apps.core.exceptions import MaxIterations, SingularMatrix
from linalg.dense import DenseMatrix, Vector, lu_solve, spectral_norm
from problems.data import Scenario, structured_selector
from second_stage.data import KktPoint, NewtonReport, NewtonSettings

logger = logging.getLogger(__name__)

DEFAULT_NEWTON = NewtonSettings()
ORACLE_MAX_ITER = 10**6


class SaddleFunction(Protocol):
    """What the KKT machinery needs to know about F2."""

    def grad_x(self, x2: Vector, y2: Vector) -> Vector: ...

    def grad_y(self, x2: Vector, y2: Vector) -> Vector: ...

    def saddle_hessian(self, x2: Vector, y2: Vector) -> DenseMatrix: ...

    def value(self, x2: Vector, y2: Vector) -> float: ...


@dataclass(frozen=True, eq=False)
class QuadraticSaddle:
    """F2 = 1/2 x'Qx + d'x + x'Oy - 1/2 y'Sy - t'y."""
    scn: Scenario

    def grad_x(self, x2, y2):
        s = self.scn
        return s.Q2 @ x2 + s.d2 + s.O2 @ y2

    def grad_y(self, x2, y2):
        s = self.scn
        return s.O2.T @ x2 - s.S2 @ y2 - s.t2

    def saddle_hessian(self, x2, y2):
        # [[F_xx, F_xy], [-F_yx, -F_yy]]
        s = self.scn
        return np.block([[s.Q2, s.O2], [-s.O2.T, s.S2]])

    def value(self, x2, y2):
        s = self.scn
        return float(
            0.5 * x2 @ s.Q2 @ x2 + s.d2 @ x2 + x2 @ s.O2 @ y2
            - 0.5 * y2 @ s.S2 @ y2 - s.t2 @ y2
        )


def _split(mu: Vector, scn: Scenario):
    n2, m2, l2 = scn.n2, scn.m2, scn.l2
    return mu[:n2], mu[n2:n2 + m2], mu[n2 + m2:n2 + m2 + l2], mu[n2 + m2 + l2:]


def _slacks(scn: Scenario, x1: Vector, y1: Vector, x2: Vector, y2: Vector):
    return scn.h - scn.T @ x1 - scn.W @ x2, scn.c - scn.A @ y1 - scn.B @ y2


def _residual(mu: Vector, scn: Scenario, x1: Vector, y1: Vector, f2: SaddleFunction) -> Vector:
    x2, y2, pi_x, pi_y = _split(mu, scn)
    slack_x, slack_y = _slacks(scn, x1, y1, x2, y2)
    return np.concatenate([
        f2.grad_x(x2, y2) + scn.W.T @ pi_x,
        -f2.grad_y(x2, y2) + scn.B.T @ pi_y,
        np.minimum(pi_x, slack_x),
        np.minimum(pi_y, slack_y),
    ])


def _jacobian(
    mu: Vector, scn: Scenario, x1: Vector, y1: Vector, f2: SaddleFunction, branch: Vector | None = None
) -> DenseMatrix:
    x2, y2, pi_x, pi_y = _split(mu, scn)
    if branch is None:
        slack_x, slack_y = _slacks(scn, x1, y1, x2, y2)
        # ties take the multiplier branch
        branch = (np.concatenate([pi_x, pi_y]) <= np.concatenate([slack_x, slack_y])).astype(np.float64)
    u = np.diag(np.asarray(branch, dtype=np.float64))
    m1 = f2.saddle_hessian(x2, y2)
    m2 = np.block([
        [scn.W, np.zeros((scn.l2, scn.m2))],
        [np.zeros((scn.s2, scn.n2)), scn.B],
    ])
    return np.block([[m1, m2.T], [(u - np.eye(u.shape[0])) @ m2, u]])


def kkt_residual(
    mu: KktPoint, scn: Scenario, x1: Vector, y1: Vector, f2: SaddleFunction | None = None
) -> Vector:
    return _residual(mu.as_vector(), scn, np.asarray(x1, float), np.asarray(y1, float), f2 or QuadraticSaddle(scn))


def generalized_jacobian(
    mu: KktPoint,
    scn: Scenario,
    x1: Vector,
    y1: Vector,
    branch: Vector | None = None,
    f2: SaddleFunction | None = None,
) -> DenseMatrix:
    """
    An element of the generalized Jacobian of H at mu. `branch` overrides the
    diagonal of U (any value in [0, 1] is admissible); by default u_ii is 1
    where pi_i <= slack_i and 0 otherwise.
    """
    x1, y1 = np.asarray(x1, float), np.asarray(y1, float)
    return _jacobian(mu.as_vector(), scn, x1, y1, f2 or QuadraticSaddle(scn), branch)


def semismooth_newton(
    scn: Scenario,
    x1: Vector,
    y1: Vector,
    mu0: KktPoint | None = None,
    tol: float = 1e-10,
    cfg: NewtonSettings = DEFAULT_NEWTON,
    keep_iterates: bool = False,
    f2: SaddleFunction | None = None,
) -> NewtonReport:
    """
    Solve H(mu) = 0 to ||H|| <= tol.

    Each step solves G d = -H and backtracks alpha = beta^m until the merit
    theta = 1/2 ||H||^2 satisfies theta(mu + alpha d) <= (1 - 2 rho alpha) theta(mu).
    F2 defaults to the scenario quadratic; any SaddleFunction on the same
    constraint data can be passed as f2.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    x1 = np.asarray(x1, dtype=np.float64)
    y1 = np.asarray(y1, dtype=np.float64)
    mu = (mu0 if mu0 is not None else KktPoint.zeros(scn)).as_vector()
    f2 = f2 or QuadraticSaddle(scn)

    h = _residual(mu, scn, x1, y1, f2)
    r = float(np.linalg.norm(h))
    history = [r]
    steps: list[float] = []
    iterates = [mu.copy()] if keep_iterates else []
    t = 0

    while r > tol:
        if t >= cfg.max_iter:
            raise MaxIterations(
                f"semismooth Newton stopped at ||H||={r:.3e} > {tol:.1e} after {t} iterations",
                iterations=t,
                residual=r,
            )
        try:
            d = lu_solve(_jacobian(mu, scn, x1, y1, f2), -h)
        except SingularMatrix as exc:
            exc.point = KktPoint.from_vector(mu, scn, residual=r)
            raise

        theta = 0.5 * r * r
        alpha = 1.0
        for m in range(cfg.max_backtracks + 1):
            trial = mu + alpha * d
            h_trial = _residual(trial, scn, x1, y1, f2)
            if 0.5 * float(h_trial @ h_trial) <= (1.0 - 2.0 * cfg.ls_ratio * alpha) * theta:
                break
            if m == cfg.max_backtracks:
                # take the shortest trial step rather than stall
                logger.warning("line search exhausted %d backtracks at ||H||=%.3e", m, r)
                break
            alpha *= cfg.ls_backtrack

        mu, h = trial, h_trial
        r = float(np.linalg.norm(h))
        history.append(r)
        steps.append(alpha)
        if keep_iterates:
            iterates.append(mu.copy())
        t += 1

    logger.debug("semismooth Newton converged: iterations=%d residual=%.3e", t, r)
    return NewtonReport(
        point=KktPoint.from_vector(mu, scn, residual=r),
        residual_norm=r,
        iterations=t,
        step_sizes=steps,
        residual_history=history,
        iterates=iterates,
    )


def _check_structured(scn: Scenario) -> None:
    if not (
        np.array_equal(scn.W, structured_selector(scn.l2, scn.n2))
        and np.array_equal(scn.B, structured_selector(scn.s2, scn.m2))
    ):
        raise ValueError("the extragradient oracle only handles W=(I,0) and B=(I,0)")


def _recover_multipliers(f2: QuadraticSaddle, scn: Scenario, x2: Vector, y2: Vector):
    pi_x = np.maximum(-f2.grad_x(x2, y2)[:scn.l2], 0.0)
    pi_y = np.maximum(f2.grad_y(x2, y2)[:scn.s2], 0.0)
    return pi_x, pi_y


def extragradient_oracle(
    scn: Scenario,
    x1: Vector,
    y1: Vector,
    tol: float = 1e-9,
    max_iter: int = ORACLE_MAX_ITER,
) -> KktPoint:
    """
    Projected extragradient on the second-stage game. With W=(I,0) and
    B=(I,0) the feasible sets are boxes on the leading coordinates, so
    projection is a componentwise clip. Stops once successive iterates move
    at most tol and the recovered KKT point has residual at most tol.
    """
    _check_structured(scn)
    x1 = np.asarray(x1, dtype=np.float64)
    y1 = np.asarray(y1, dtype=np.float64)
    f2 = QuadraticSaddle(scn)
    l2, s2 = scn.l2, scn.s2
    upper_x = scn.h - scn.T @ x1
    upper_y = scn.c - scn.A @ y1

    def proj_x(x):
        x = x.copy()
        x[:l2] = np.minimum(x[:l2], upper_x)
        return x

    def proj_y(y):
        y = y.copy()
        y[:s2] = np.minimum(y[:s2], upper_y)
        return y

    eta = 0.5 / spectral_norm(f2.saddle_hessian(None, None))
    x, y = proj_x(np.zeros(scn.n2)), proj_y(np.zeros(scn.m2))

    for _ in range(max_iter):
        x_bar = proj_x(x - eta * f2.grad_x(x, y))
        y_bar = proj_y(y + eta * f2.grad_y(x, y))
        x_new = proj_x(x - eta * f2.grad_x(x_bar, y_bar))
        y_new = proj_y(y + eta * f2.grad_y(x_bar, y_bar))
        moved = np.sqrt(np.sum((x_new - x) ** 2) + np.sum((y_new - y) ** 2))
        x, y = x_new, y_new
        if moved <= tol:
            pi_x, pi_y = _recover_multipliers(f2, scn, x, y)
            point = KktPoint(x, y, pi_x, pi_y)
            r = float(np.linalg.norm(kkt_residual(point, scn, x1, y1)))
            if r <= tol:
                return KktPoint(x, y, pi_x, pi_y, residual=r)

    raise MaxIterations(f"extragradient did not settle within {max_iter} iterations", iterations=max_iter)


def unconstrained_saddle(scn: Scenario) -> KktPoint:
    """Stationary point of F2 ignoring the constraints (block linear solve)."""
    f2 = QuadraticSaddle(scn)
    z = lu_solve(f2.saddle_hessian(None, None), -np.concatenate([scn.d2, scn.t2]))
    return KktPoint(z[:scn.n2], z[scn.n2:], np.zeros(scn.l2), np.zeros(scn.s2))


def second_stage_value(point: KktPoint, scn: Scenario) -> float:
    return QuadraticSaddle(scn).value(point.x2, point.y2)


def multiplier_gradients(point: KktPoint, scn: Scenario) -> tuple[Vector, Vector]:
    """Gradients of the second-stage value in x1 and y1: (T' pi_x, -A' pi_y)."""
    return scn.T.T @ point.pi_x, -(scn.A.T @ point.pi_y)
