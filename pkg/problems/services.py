# problems/services.py
"""
Seeded generation of game instances and scenario sets.

Layout of one raw draw xi (all components uniform on [-1, 1]), in order:
upper triangle of Q2~ (row-major, with diagonal), upper triangle of S2~,
T~ (l2 x n1), A~ (s2 x m1), d2~, t2~, O2~ (n2 x m2), h~, c~.
Matrices are filled row-major.
"""
from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np

from apps.core.exceptions import IndefiniteScenario, InvalidConfig
from apps.core.seeding import STREAM_INSTANCE, STREAM_SCENARIOS, make_rng
from linalg.dense import Vector, cholesky_check, min_singular_value
from problems.data import Dimensions, ProblemInstance, SaaProblem, Scenario, structured_selector

logger = logging.getLogger(__name__)

MAX_RESAMPLE_ATTEMPTS = 100


def generate_instance(
    dims: Dimensions,
    tau: float,
    lb: float,
    ub: float,
    seed: int,
    noise_scale: float = 0.1,
) -> ProblemInstance:
    if not tau > 0:
        raise InvalidConfig(f"tau must be positive, got {tau}")
    if not lb < ub:
        raise InvalidConfig(f"need lb < ub, got [{lb}, {ub}]")

    rng = make_rng(seed, STREAM_INSTANCE)
    n1, m1, n2, m2, l2, s2 = dims.n1, dims.m1, dims.n2, dims.m2, dims.l2, dims.s2

    # draw order is part of the reproducibility contract
    O1 = rng.uniform(0.0, 1.0, size=(n1, m1))
    d1 = rng.uniform(0.0, 1.0, size=n1)
    t1 = rng.uniform(0.0, 1.0, size=m1)
    Obar2 = rng.uniform(0.0, 1.0, size=(n2, m2))
    Tbar = rng.uniform(0.0, 1.0, size=(l2, n1))
    Abar = rng.uniform(0.0, 1.0, size=(s2, m1))
    dbar2 = rng.uniform(0.0, 1.0, size=n2)
    tbar2 = rng.uniform(0.0, 1.0, size=m2)

    return ProblemInstance(
        dims=dims,
        Q1=0.1 * np.eye(n1),
        S1=np.eye(m1),
        O1=O1,
        d1=d1,
        t1=t1,
        lb=float(lb),
        ub=float(ub),
        tau=float(tau),
        noise_scale=float(noise_scale),
        Qbar2=np.diag(np.arange(1.0, n2 + 1.0)),
        Sbar2=np.eye(m2),
        Obar2=Obar2,
        Tbar=Tbar,
        Abar=Abar,
        dbar2=dbar2,
        tbar2=tbar2,
        hbar=0.1 * np.ones(l2),
        cbar=0.1 * np.ones(s2),
        seed=int(seed),
    )


def _symmetric_from_upper(values: Vector, n: int) -> np.ndarray:
    m = np.zeros((n, n))
    m[np.triu_indices(n)] = values
    return m + np.triu(m, 1).T


def scenario_from_xi(inst: ProblemInstance, xi: Vector) -> Scenario:
    """Map one raw draw to second-stage data."""
    dims = inst.dims
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (dims.xi_dim,):
        raise ValueError(f"xi must have {dims.xi_dim} components, got shape {xi.shape}")
    n1, m1, n2, m2, l2, s2 = dims.n1, dims.m1, dims.n2, dims.m2, dims.l2, dims.s2

    sizes = [
        n2 * (n2 + 1) // 2, m2 * (m2 + 1) // 2,
        l2 * n1, s2 * m1, n2, m2, n2 * m2, l2, s2,
    ]
    q, s, t, a, d, tt, o, h, c = np.split(xi, np.cumsum(sizes)[:-1])
    eps = inst.noise_scale

    return Scenario(
        Q2=inst.tau * inst.Qbar2 + eps * _symmetric_from_upper(q, n2),
        S2=inst.tau * inst.Sbar2 + eps * _symmetric_from_upper(s, m2),
        O2=inst.Obar2 + eps * o.reshape(n2, m2),
        T=inst.Tbar + eps * t.reshape(l2, n1),
        A=inst.Abar + eps * a.reshape(s2, m1),
        d2=inst.dbar2 + eps * d,
        t2=inst.tbar2 + eps * tt,
        h=inst.hbar + eps * h,
        c=inst.cbar + eps * c,
        W=structured_selector(l2, n2),
        B=structured_selector(s2, m2),
        xi=xi.copy(),
    )


def is_positive_definite(scn: Scenario) -> bool:
    return cholesky_check(scn.Q2).pd and cholesky_check(scn.S2).pd


def _sample(
    inst: ProblemInstance, n: int, seed: int, max_attempts: int
) -> tuple[list[Scenario], int]:
    if n < 0:
        raise ValueError(f"scenario count must be >= 0, got {n}")
    scenarios: list[Scenario] = []
    rejected = 0
    for i in range(n):
        # one substream per index: smaller sets are prefixes of larger ones
        rng = make_rng(seed, STREAM_SCENARIOS, i)
        for attempt in range(1, max_attempts + 1):
            scn = scenario_from_xi(inst, rng.uniform(-1.0, 1.0, size=inst.dims.xi_dim))
            if is_positive_definite(scn):
                scenarios.append(scn)
                break
            rejected += 1
            logger.debug("scenario %d attempt %d lost positive definiteness", i, attempt)
        else:
            raise IndefiniteScenario(
                f"scenario {i} stayed indefinite after {max_attempts} draws (tau={inst.tau})",
                index=i,
                attempts=max_attempts,
            )
    if rejected:
        logger.warning("resampled %d indefinite scenario draws (tau=%s, seed=%s)", rejected, inst.tau, seed)
    return scenarios, rejected


def sample_scenarios(
    inst: ProblemInstance, n: int, seed: int, max_attempts: int = MAX_RESAMPLE_ATTEMPTS
) -> list[Scenario]:
    return _sample(inst, n, seed, max_attempts)[0]


def strong_modulus(scenarios: list[Scenario] | tuple[Scenario, ...]) -> float:
    """
    Smallest strong convexity/concavity modulus over the scenarios, i.e. the
    least eigenvalue among all Q2 and S2 (singular values of SPD matrices).
    """
    if not scenarios:
        raise ValueError("strong_modulus of an empty scenario list")
    return min(min(min_singular_value(s.Q2), min_singular_value(s.S2)) for s in scenarios)


def build_saa_problem(
    inst: ProblemInstance, n: int, seed: int, max_attempts: int = MAX_RESAMPLE_ATTEMPTS
) -> SaaProblem:
    """Sample n scenarios and certify sigma_lb on the instance."""
    if n < 1:
        raise InvalidConfig(f"an SAA problem needs at least one scenario, got n={n}")
    scenarios, rejected = _sample(inst, n, seed, max_attempts)
    sigma = strong_modulus(scenarios)
    if not sigma > 0:
        raise IndefiniteScenario(f"certified modulus {sigma:.3e} is not positive")
    return SaaProblem(
        instance=replace(inst, sigma_lb=sigma),
        scenarios=tuple(scenarios),
        seed=int(seed),
        resampled=rejected,
    )
