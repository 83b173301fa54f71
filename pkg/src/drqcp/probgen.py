"""Seeded random QCPs over the nonnegative orthant with planted ground truth.

Feasible instances plant a strictly complementary primal-dual pair and set
(b, c) so the KKT conditions hold exactly. Infeasible instances plant a
strictly positive Farkas certificate y* in the left null space of A with
b'y* < 0 (plus a dual-feasible point, so the status is unambiguous).
Unbounded instances plant a ray x* with Px* = 0, Ax* < 0, c'x* < 0 (plus a
primal-feasible point). Every generator hard-asserts its own plant before
returning.

The quadratic term carries a unit diagonal (expressed through the Gram
factor, or a projector for the unbounded kind so the planted ray stays in
the null space): without it, near-null directions of a sparse G G' make
first-order iterations crawl, drowning the comparison in conditioning
noise rather than algorithmic behavior.

Generation is a pure function of the spec: a PCG64 generator seeded with
the spec's seed drives all draws in a fixed order, so the same spec
produces bit-identical problems on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cones import ConeSpec, NonNegative
from .linalg import SparseMatrix
from .problem import QcpProblem, validate_or_raise

_PLANT_TOL = 1e-10
_RIDGE = 1.0
# Certificate margin (-b'y* or -c'x*): small enough that divergence-based
# detection has to work for its certificate, away from zero so the planted
# instance is strongly infeasible.
_MARGIN_LO, _MARGIN_HI = 0.1, 0.3

KINDS = ("feasible", "infeasible", "unbounded")


@dataclass(frozen=True)
class GenSpec:
    n: int
    m: int
    seed: int
    kind: str
    density: float = 0.1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive")
        if not 0.0 < self.density <= 1.0:
            raise ValueError("density must lie in (0, 1]")
        if self.density * self.m * self.n < 1.0:
            raise ValueError("density too low: no nonzeros would be drawn")
        if self.kind == "infeasible" and self.m <= self.n:
            raise ValueError("infeasible generation requires m > n")


def _rng(spec: GenSpec) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(spec.seed))


def _sparse_gaussian(rng, nrows, ncols, density) -> np.ndarray:
    """Dense array with a sparse Gaussian fill (desk-scale sizes)."""
    nnz = max(1, int(round(density * nrows * ncols)))
    flat = rng.choice(nrows * ncols, size=nnz, replace=False)
    out = np.zeros(nrows * ncols)
    out[flat] = rng.standard_normal(nnz)
    return out.reshape(nrows, ncols)


def _assemble(spec, P_dense, A_dense, c, b) -> QcpProblem:
    problem = QcpProblem(
        n=spec.n,
        m=spec.m,
        P=SparseMatrix.from_dense(np.triu(P_dense)),
        A=SparseMatrix.from_dense(A_dense),
        c=c,
        b=b,
        cones=ConeSpec([NonNegative(spec.m)]),
    )
    return validate_or_raise(problem)


def gen_feasible(spec: GenSpec) -> QcpProblem:
    problem, _ = gen_feasible_with_plant(spec)
    return problem


def gen_feasible_with_plant(spec: GenSpec) -> tuple[QcpProblem, dict]:
    """Feasible QCP plus its planted optimal triple (x*, y*, s*)."""
    if spec.kind != "feasible":
        raise ValueError("spec.kind must be 'feasible'")
    rng = _rng(spec)
    n, m = spec.n, spec.m
    A = _sparse_gaussian(rng, m, n, spec.density)
    G = _sparse_gaussian(rng, n, n, spec.density)
    P = G @ G.T + _RIDGE * np.eye(n)  # Gram form of the augmented factor [G, I]
    x_star = rng.standard_normal(n)
    support = rng.random(m) < 0.5
    s_star = np.where(support, rng.uniform(0.1, 1.1, m), 0.0)
    # Dual block planted an order of magnitude above the primal: the data is
    # deliberately unequilibrated (no rescaling heuristics anywhere in this
    # solver), which is the regime the scale-free embedding is built for.
    y_star = np.where(~support, rng.uniform(1.0, 11.0, m), 0.0)
    b = A @ x_star + s_star
    c = -(P @ x_star) - A.T @ y_star

    scale = max(1.0, np.abs(b).max(), np.abs(c).max())
    assert np.max(np.abs(A @ x_star + s_star - b)) <= _PLANT_TOL * scale
    assert np.max(np.abs(P @ x_star + A.T @ y_star + c)) <= _PLANT_TOL * scale
    assert abs(s_star @ y_star) <= _PLANT_TOL * scale

    problem = _assemble(spec, P, A, c, b)
    plant = {
        "x": x_star,
        "y": y_star,
        "s": s_star,
        "objective": problem.objective(x_star),
    }
    return problem, plant


def gen_infeasible(spec: GenSpec) -> QcpProblem:
    problem, _ = gen_infeasible_with_plant(spec)
    return problem


def gen_infeasible_with_plant(spec: GenSpec) -> tuple[QcpProblem, dict]:
    """Primal-infeasible QCP plus its planted Farkas certificate y*."""
    if spec.kind != "infeasible":
        raise ValueError("spec.kind must be 'infeasible'")
    rng = _rng(spec)
    n, m = spec.n, spec.m
    y_star = rng.uniform(0.5, 1.5, m)  # strictly interior to the dual cone
    ynorm2 = y_star @ y_star

    A = _sparse_gaussian(rng, m, n, spec.density)
    A -= np.outer(y_star, (y_star @ A) / ynorm2)  # Gram-Schmidt: A'y* = 0
    b = rng.standard_normal(m)
    margin = rng.uniform(_MARGIN_LO, _MARGIN_HI)
    b -= y_star * ((b @ y_star + margin) / ynorm2)  # b'y* = -margin < 0

    G = _sparse_gaussian(rng, n, n, spec.density)
    P = G @ G.T + _RIDGE * np.eye(n)
    # Plant a dual-feasible point so only the primal side is infeasible.
    x0 = rng.standard_normal(n)
    y0 = rng.uniform(0.0, 1.0, m)
    c = -(P @ x0) - A.T @ y0

    scale = max(1.0, np.abs(A).max())
    assert np.max(np.abs(A.T @ y_star)) <= _PLANT_TOL * scale
    assert b @ y_star < 0
    assert np.all(y_star > 0)

    problem = _assemble(spec, P, A, c, b)
    plant = {"y": y_star / margin, "margin": margin}
    return problem, plant


def gen_unbounded(spec: GenSpec) -> QcpProblem:
    problem, _ = gen_unbounded_with_plant(spec)
    return problem


def gen_unbounded_with_plant(spec: GenSpec) -> tuple[QcpProblem, dict]:
    """Dual-infeasible QCP plus its planted unbounded ray x*."""
    if spec.kind != "unbounded":
        raise ValueError("spec.kind must be 'unbounded'")
    rng = _rng(spec)
    n, m = spec.n, spec.m
    x_star = rng.standard_normal(n)
    while x_star @ x_star < 1e-8:
        x_star = rng.standard_normal(n)
    xnorm2 = x_star @ x_star

    G = _sparse_gaussian(rng, n, n, spec.density)
    G -= np.outer(x_star, (x_star @ G) / xnorm2)  # G'x* = 0
    # Ridge through the projector keeps null(P) = span(x*).
    P = G @ G.T + _RIDGE * (np.eye(n) - np.outer(x_star, x_star) / xnorm2)

    A = _sparse_gaussian(rng, m, n, spec.density)
    slack = rng.uniform(0.1, 1.0, m)
    A -= np.outer((A @ x_star + slack) / xnorm2, x_star)  # A x* = -slack < 0

    c = rng.standard_normal(n)
    margin = rng.uniform(_MARGIN_LO, _MARGIN_HI)
    c -= x_star * ((c @ x_star + margin) / xnorm2)  # c'x* = -margin < 0

    # Plant a primal-feasible point so only the dual side is infeasible.
    x0 = rng.standard_normal(n)
    s0 = rng.uniform(0.0, 1.0, m)
    b = A @ x0 + s0

    scale = max(1.0, np.abs(P).max(), np.abs(A).max())
    assert np.max(np.abs(P @ x_star)) <= _PLANT_TOL * scale
    assert np.all(A @ x_star < 0)
    assert c @ x_star < 0

    problem = _assemble(spec, P, A, c, b)
    plant = {"x": x_star / margin, "margin": margin}
    return problem, plant


def generate(spec: GenSpec) -> QcpProblem:
    """Dispatch on spec.kind."""
    return {
        "feasible": gen_feasible,
        "infeasible": gen_infeasible,
        "unbounded": gen_unbounded,
    }[spec.kind](spec)
