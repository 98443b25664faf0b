# problems/data.py
"""
Value types for the two-stage stochastic zero-sum game family.

All types are frozen; arrays are float64 numpy arrays that nothing mutates
after construction, so instances and scenarios can be shared freely.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from apps.core.exceptions import InvalidDims, SchemaMismatch
from linalg.dense import DenseMatrix, Vector, dense, vector

DOCUMENT_VERSION = 1


def structured_selector(rows: int, cols: int) -> DenseMatrix:
    """The (I, 0) block used for W and B."""
    return np.hstack([np.eye(rows), np.zeros((rows, cols - rows))])


@dataclass(frozen=True)
class Dimensions:
    n1: int = 3
    m1: int = 2
    n2: int = 4
    m2: int = 3
    l2: int = 2
    s2: int = 2

    def __post_init__(self):
        for name in ("n1", "m1", "n2", "m2", "l2", "s2"):
            value = getattr(self, name)
            if int(value) != value or value <= 0:
                raise InvalidDims(f"{name} must be a positive count, got {value!r}")
        if self.l2 > self.n2 or self.s2 > self.m2:
            raise InvalidDims("W=(I,0) and B=(I,0) need l2 <= n2 and s2 <= m2")

    @property
    def xi_dim(self) -> int:
        n1, m1, n2, m2, l2, s2 = self.n1, self.m1, self.n2, self.m2, self.l2, self.s2
        return (
            n2 * (n2 + 1) // 2 + m2 * (m2 + 1) // 2
            + l2 * n1 + s2 * m1 + n2 + m2 + n2 * m2 + l2 + s2
        )

    @property
    def kkt_dim(self) -> int:
        return self.n2 + self.m2 + self.l2 + self.s2

    def as_dict(self) -> dict[str, int]:
        return {k: getattr(self, k) for k in ("n1", "m1", "n2", "m2", "l2", "s2")}


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """
    Deterministic first-stage data plus the base (mean) second-stage data.
    sigma_lb is 0 until a scenario set has been certified against it.
    """
    dims: Dimensions
    Q1: DenseMatrix
    S1: DenseMatrix
    O1: DenseMatrix
    d1: Vector
    t1: Vector
    lb: float
    ub: float
    tau: float
    noise_scale: float
    Qbar2: DenseMatrix
    Sbar2: DenseMatrix
    Obar2: DenseMatrix
    Tbar: DenseMatrix
    Abar: DenseMatrix
    dbar2: Vector
    tbar2: Vector
    hbar: Vector
    cbar: Vector
    seed: int = 0
    sigma_lb: float = 0.0

    @property
    def W(self) -> DenseMatrix:
        return structured_selector(self.dims.l2, self.dims.n2)

    @property
    def B(self) -> DenseMatrix:
        return structured_selector(self.dims.s2, self.dims.m2)


@dataclass(frozen=True, eq=False)
class Scenario:
    Q2: DenseMatrix
    S2: DenseMatrix
    O2: DenseMatrix
    T: DenseMatrix
    A: DenseMatrix
    d2: Vector
    t2: Vector
    h: Vector
    c: Vector
    W: DenseMatrix
    B: DenseMatrix
    xi: Vector = field(default_factory=lambda: np.zeros(0))

    @property
    def n2(self) -> int:
        return self.Q2.shape[0]

    @property
    def m2(self) -> int:
        return self.S2.shape[0]

    @property
    def l2(self) -> int:
        return self.W.shape[0]

    @property
    def s2(self) -> int:
        return self.B.shape[0]


@dataclass(frozen=True, eq=False)
class SaaProblem:
    instance: ProblemInstance
    scenarios: tuple[Scenario, ...]
    seed: int
    # scenario draws rejected for losing positive definiteness
    resampled: int = 0

    def __post_init__(self):
        if not self.scenarios:
            raise ValueError("an SAA problem needs at least one scenario")

    @property
    def n(self) -> int:
        return len(self.scenarios)


# -----------------------------------------------------------------------------
# JSON documents
# -----------------------------------------------------------------------------
_INSTANCE_MATRICES = ("Q1", "S1", "O1", "Qbar2", "Sbar2", "Obar2", "Tbar", "Abar")
_INSTANCE_VECTORS = ("d1", "t1", "dbar2", "tbar2", "hbar", "cbar")
_SCENARIO_MATRICES = ("Q2", "S2", "O2", "T", "A", "W", "B")
_SCENARIO_VECTORS = ("d2", "t2", "h", "c", "xi")


def instance_to_document(inst: ProblemInstance) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "dims": inst.dims.as_dict(),
        "tau": inst.tau,
        "lb": inst.lb,
        "ub": inst.ub,
        "noise_scale": inst.noise_scale,
        "seed": inst.seed,
        "sigma_lb": inst.sigma_lb,
    }
    for name in _INSTANCE_MATRICES + _INSTANCE_VECTORS:
        doc[name] = getattr(inst, name).tolist()
    return doc


def instance_from_document(doc: dict[str, Any]) -> ProblemInstance:
    try:
        kwargs: dict[str, Any] = {
            "dims": Dimensions(**doc["dims"]),
            "tau": float(doc["tau"]),
            "lb": float(doc["lb"]),
            "ub": float(doc["ub"]),
            "noise_scale": float(doc["noise_scale"]),
            "seed": int(doc["seed"]),
            "sigma_lb": float(doc.get("sigma_lb", 0.0)),
        }
        for name in _INSTANCE_MATRICES:
            kwargs[name] = dense(doc[name])
        for name in _INSTANCE_VECTORS:
            kwargs[name] = vector(doc[name])
    except KeyError as exc:
        raise SchemaMismatch(f"instance document is missing {exc}") from exc
    return ProblemInstance(**kwargs)


def scenario_to_document(scn: Scenario) -> dict[str, Any]:
    return {name: getattr(scn, name).tolist() for name in _SCENARIO_MATRICES + _SCENARIO_VECTORS}


def scenario_from_document(doc: dict[str, Any]) -> Scenario:
    try:
        kwargs: dict[str, Any] = {name: dense(doc[name]) for name in _SCENARIO_MATRICES}
        kwargs.update({name: vector(doc[name]) for name in _SCENARIO_VECTORS})
    except KeyError as exc:
        raise SchemaMismatch(f"scenario document is missing {exc}") from exc
    return Scenario(**kwargs)


def problem_to_document(prob: SaaProblem) -> dict[str, Any]:
    return {
        "version": DOCUMENT_VERSION,
        "instance": instance_to_document(prob.instance),
        "seeds": {"instance": prob.instance.seed, "scenarios": prob.seed},
        "resampled": prob.resampled,
        "scenarios": [scenario_to_document(s) for s in prob.scenarios],
    }


def problem_from_document(doc: dict[str, Any]) -> SaaProblem:
    if doc.get("version") != DOCUMENT_VERSION:
        raise SchemaMismatch(f"unsupported problem document version {doc.get('version')!r}")
    try:
        return SaaProblem(
            instance=instance_from_document(doc["instance"]),
            scenarios=tuple(scenario_from_document(s) for s in doc["scenarios"]),
            seed=int(doc["seeds"]["scenarios"]),
            resampled=int(doc.get("resampled", 0)),
        )
    except KeyError as exc:
        raise SchemaMismatch(f"problem document is missing {exc}") from exc
