"""Baseline: DR splitting applied to the complementarity problem directly.

Per iteration,

    u~ = (I+M)^{-1} (w - q)
    u  = proj_{R^n x K*}(2 u~ - w)
    w += u - u~.

This converges only when the problem is feasible; on infeasible problems
the iterates diverge along a ray and certificates are extracted from the
(exponentially smoothed) successive differences w^{k+1} - w^k, checked with
the same verifier the homogeneous engine uses. The procedure coincides with
the homogeneous engine when the latter's scalars (tau, tau~, eta) are
pinned at one.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .cones import project_dual_cone
from .engine_homogeneous import (
    Candidate,
    KktBackend,
    SolverSettings,
    candidate_meets_tolerances,
    extract_candidate,
)
from .problem import (
    Certificate,
    QcpProblem,
    SolveResult,
    Status,
    make_dual_infeasibility_certificate,
    make_primal_infeasibility_certificate,
    to_lcp,
    validate_or_raise,
    verify_certificate,
)

# Exponential smoothing weight for successive differences; raw differences
# are too noisy early on to normalize into certificate candidates.
_DELTA_SMOOTHING = 0.5


@dataclass
class DirectState:
    problem: QcpProblem
    settings: SolverSettings
    backend: KktBackend
    q: np.ndarray
    w: np.ndarray
    u: np.ndarray
    u_tilde: np.ndarray
    refl: np.ndarray
    delta_w: np.ndarray
    iter: int = 0
    fp_residual: float = math.inf

    @property
    def v(self) -> np.ndarray:
        """Moreau complement of the cone step; its y block lives in K."""
        return self.u - self.refl


def initialize_direct(
    problem: QcpProblem,
    settings: SolverSettings | None = None,
    w0: np.ndarray | None = None,
) -> DirectState:
    settings = settings or SolverSettings()
    validate_or_raise(problem)
    backend = KktBackend(problem, settings)
    d = problem.d
    if w0 is None:
        w = np.zeros(d)
    else:
        w = np.array(w0, dtype=np.float64, copy=True)
        if len(w) != d:
            raise ValueError(f"w0 has length {len(w)}, expected {d}")
    return DirectState(
        problem=problem,
        settings=settings,
        backend=backend,
        q=to_lcp(problem).q,
        w=w,
        u=np.zeros(d),
        u_tilde=np.zeros(d),
        refl=np.zeros(d),
        delta_w=np.zeros(d),
    )


def iterate_direct(state: DirectState) -> DirectState:
    """One DR step on the original problem, plus difference bookkeeping."""
    problem = state.problem
    n = problem.n
    u_tilde = state.backend.solve_iplusm(state.w - state.q)
    refl = 2.0 * u_tilde - state.w
    u = refl.copy()
    u[n:] = project_dual_cone(problem.cones, refl[n:])
    delta = u - u_tilde
    state.fp_residual = float(np.linalg.norm(delta))
    state.delta_w = _DELTA_SMOOTHING * state.delta_w + (1.0 - _DELTA_SMOOTHING) * delta
    state.w += delta
    state.u = u
    state.u_tilde = u_tilde
    state.refl = refl
    state.iter += 1
    return state


def detect_infeasibility_direct(
    state: DirectState, eps_infeas: float
) -> Certificate | None:
    """Certificate candidates from smoothed successive differences.

    The smoothed difference's blocks are normalized (b'y = -1 or
    c'x = -1) and run through the same alternative-system verifier as the
    homogeneous engine, including its cone-membership gate.
    """
    if state.iter < 2:
        return None
    problem = state.problem
    n = problem.n
    cert = make_primal_infeasibility_certificate(problem, state.delta_w[n:])
    if (
        cert is not None
        and cert.residual < eps_infeas
        and verify_certificate(problem, cert, eps_infeas)
    ):
        return cert
    cert = make_dual_infeasibility_certificate(problem, state.delta_w[:n])
    if (
        cert is not None
        and cert.residual < eps_infeas
        and verify_certificate(problem, cert, eps_infeas)
    ):
        return cert
    return None


def solve_direct(
    problem: QcpProblem,
    settings: SolverSettings | None = None,
    w0: np.ndarray | None = None,
    trace: list | None = None,
) -> SolveResult:
    """Run the direct-splitting engine until a terminal status."""
    settings = settings or SolverSettings()
    start = time.perf_counter()
    state = initialize_direct(problem, settings, w0=w0)
    status = None
    cand = Candidate(valid=False)
    certificate = None
    while status is None:
        iterate_direct(state)
        at_check = (
            state.iter % settings.check_interval == 0
            or state.iter >= settings.max_iters
        )
        if not at_check:
            continue
        cand = _direct_candidate(state)
        if candidate_meets_tolerances(cand, settings):
            status = Status.SOLVED
        else:
            certificate = detect_infeasibility_direct(state, settings.eps_infeas)
            if certificate is not None:
                status = (
                    Status.PRIMAL_INFEASIBLE
                    if certificate.kind == Status.PRIMAL_INFEASIBLE
                    else Status.DUAL_INFEASIBLE
                )
            elif state.iter >= settings.max_iters:
                status = Status.MAX_ITERATIONS
            elif time.perf_counter() - start > settings.time_limit:
                status = Status.TIME_LIMIT
        if trace is not None:
            trace.append(_trace_row(state, cand))
    result = SolveResult(
        status=status,
        iterations=state.iter,
        solve_time=time.perf_counter() - start,
        primal_res=cand.primal,
        dual_res=cand.dual,
        gap=cand.gap,
        certificate=certificate,
    )
    if cand.valid and status in (Status.SOLVED, Status.MAX_ITERATIONS, Status.TIME_LIMIT):
        result.x, result.y, result.s = cand.x, cand.y, cand.s
    result.diagnostics["fp_residual"] = state.fp_residual
    return result


def _direct_candidate(state: DirectState) -> Candidate:
    """Candidate (x, y, s) = (u_x, u_y, v_y); tau fixed at one here."""
    v = np.empty(state.problem.d + 1)
    v[:-1] = state.v
    v[-1] = 0.0
    return extract_candidate(state.problem, state.u, 1.0, v)


def _trace_row(state: DirectState, cand: Candidate) -> tuple:
    problem = state.problem
    n = problem.n
    cert_p = make_primal_infeasibility_certificate(problem, state.delta_w[n:])
    cert_d = make_dual_infeasibility_certificate(problem, state.delta_w[:n])
    return (
        "direct",
        state.iter,
        cand.primal,
        cand.dual,
        cand.gap,
        math.nan,
        math.nan,
        state.fp_residual,
        cert_p.residual if cert_p is not None else math.inf,
        cert_d.residual if cert_d is not None else math.inf,
    )


