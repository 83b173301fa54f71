"""DR splitting for the homogeneous embedding of the QCP's complementarity problem.

The embedding works in w = (mu, eta) of dimension d+1 and alternates three
blocks per iteration:

    resolvent:  p = (I+M)^{-1} mu
                tau~ = root_plus(mu, eta, p, r)      (nonnegative quadratic root)
                z~   = p - r tau~
    cone step:  z    = proj_{R^n x K*}(2 z~ - mu)
                tau  = max(2 tau~ - eta, 0)
    averaging:  mu  += z - z~,   eta += tau - tau~

where r = (I+M)^{-1} q is computed once and cached. A solution candidate is
read off as (z_x, z_y, v_y)/tau; when tau collapses and the complementary
iterate's last entry (a kappa proxy) takes over, the same z blocks are
normalized into infeasibility certificates instead. Iterates always satisfy
the cone memberships and complementarity, so termination only tests the
primal/dual residuals and the gap, or the certificate residuals.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .cones import project_dual_cone
from .linalg import (
    assemble_kkt,
    factor_kkt,
    kkt_diag_precond,
    solve_kkt_direct,
    solve_kkt_indirect,
    spmv,
    spmv_sym_upper,
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
)

TAU_MIN = 1e-12
_STALL_TOL = 1e-10


class NumericalError(RuntimeError):
    """Internal quantities became inconsistent (corrupted p or r)."""


@dataclass
class SolverSettings:
    """Tolerances and limits; defaults follow the solver's standard profile.

    ``pin_scalars`` is a diagnostic mode that freezes the embedding scalars
    (tau, tau~, eta) at one, which reproduces DR splitting applied to the
    complementarity problem directly.
    """

    eps_abs: float = 1e-3
    eps_rel: float = 1e-4
    eps_infeas: float = 1e-4
    max_iters: int = 100_000
    time_limit: float = 1000.0
    check_interval: int = 25
    linsys: str = "direct"  # "direct" (cached LDL^T) or "indirect" (CG)
    permutation: str = "amd"
    cg_rate: float = 1.5
    cg_floor: float = 1e-12
    pin_scalars: bool = False

    def __post_init__(self):
        for name in ("eps_abs", "eps_rel", "eps_infeas"):
            if getattr(self, name) < 0 or (name != "eps_rel" and getattr(self, name) == 0):
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1 or self.check_interval < 1:
            raise ValueError("max_iters and check_interval must be >= 1")
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.linsys not in ("direct", "indirect"):
            raise ValueError(f"unknown linsys {self.linsys!r}")


class KktBackend:
    """Per-solve facade over the direct and indirect KKT backends."""

    def __init__(self, problem: QcpProblem, settings: SolverSettings):
        self.n, self.m = problem.n, problem.m
        self.mode = settings.linsys
        self._settings = settings
        if self.mode == "direct":
            self.factorization = factor_kkt(
                assemble_kkt(problem.P, problem.A), settings.permutation
            )
        else:
            self._P, self._A = problem.P, problem.A
            self._precond = kkt_diag_precond(problem.P, problem.A)
            self._warm = np.zeros(self.n)
            self._calls = 0

    def solve_iplusm(self, v: np.ndarray, tight: bool = False) -> np.ndarray:
        """z = (I+M)^{-1} v, via the KKT system with rhs (v_x, -v_y)."""
        rhs = np.concatenate([v[: self.n], -v[self.n :]])
        if self.mode == "direct":
            return solve_kkt_direct(self.factorization, rhs)
        s = self._settings
        if tight:
            tol = s.cg_floor
        else:
            self._calls += 1
            tol = max(s.cg_floor, min(0.1, self._calls**-s.cg_rate))
        z = solve_kkt_indirect(
            self._P, self._A, rhs, tol=tol, warm=self._warm, precond=self._precond
        )
        self._warm = z[: self.n]
        return z


def root_plus(mu, eta: float, p, r, rr: float | None = None) -> float:
    """Nonnegative root of the scalar quadratic from the embedded resolvent.

    The quadratic is tau^2 (1 + r'r) + tau (r'mu - 2 r'p - eta) + p'(p - mu);
    its constant term equals -p'Mp <= 0 by monotonicity, so the roots
    straddle zero and the discriminant is nonnegative up to rounding.
    """
    a = 1.0 + (float(r @ r) if rr is None else rr)
    b = float(r @ mu) - 2.0 * float(r @ p) - eta
    c = float(p @ (p - mu))
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        if disc < -1e-9 * max(b * b, abs(4.0 * a * c)):
            raise NumericalError(
                f"resolvent quadratic has discriminant {disc:.3e}; "
                "cached solves are inconsistent"
            )
        disc = 0.0
    sq = math.sqrt(disc)
    # Pick the evaluation of the nonnegative root that avoids cancellation.
    if b <= 0.0:
        tau = (-b + sq) / (2.0 * a)
    else:
        tau = -2.0 * c / (b + sq) if (b + sq) > 0.0 else 0.0
    return max(tau, 0.0)


@dataclass
class HomogeneousState:
    """DR iterate w = (mu, eta) plus the derived u, u~ and cached data."""

    problem: QcpProblem
    settings: SolverSettings
    backend: KktBackend
    mu: np.ndarray
    eta: float
    r: np.ndarray
    rr: float
    z: np.ndarray
    tau: float
    z_tilde: np.ndarray
    tau_tilde: float
    p: np.ndarray
    refl_z: np.ndarray
    refl_tau: float
    iter: int = 0
    fp_residual: float = math.inf

    @property
    def d(self) -> int:
        return self.problem.d

    @property
    def v(self) -> np.ndarray:
        """Moreau complement v = u + w_prev - 2 u~, in C+* with u _|_ v."""
        out = np.empty(self.d + 1)
        out[:-1] = self.z - self.refl_z
        out[-1] = self.tau - self.refl_tau
        return out

    @property
    def kappa(self) -> float:
        """Last entry of v, read as the infeasibility scalar at finite k."""
        return self.tau - self.refl_tau

    def w(self) -> np.ndarray:
        out = np.empty(self.d + 1)
        out[:-1] = self.mu
        out[-1] = self.eta
        return out


def initialize(
    problem: QcpProblem,
    settings: SolverSettings | None = None,
    w0: np.ndarray | None = None,
) -> HomogeneousState:
    """Set up a solve: w0 = e_{d+1} unless given, r computed and cached."""
    settings = settings or SolverSettings()
    validate_or_raise(problem)
    backend = KktBackend(problem, settings)
    lcp = to_lcp(problem)
    d = problem.d
    if w0 is None:
        mu = np.zeros(d)
        eta = 1.0
    else:
        w0 = np.asarray(w0, dtype=np.float64)
        if len(w0) != d + 1:
            raise ValueError(f"w0 has length {len(w0)}, expected {d + 1}")
        mu = w0[:-1].copy()
        eta = float(w0[-1])
    r = backend.solve_iplusm(lcp.q, tight=True)
    return HomogeneousState(
        problem=problem,
        settings=settings,
        backend=backend,
        mu=mu,
        eta=eta,
        r=r,
        rr=float(r @ r),
        z=np.zeros(d),
        tau=0.0,
        z_tilde=np.zeros(d),
        tau_tilde=0.0,
        p=np.zeros(d),
        refl_z=np.zeros(d),
        refl_tau=0.0,
    )


def resolvent_q(state: HomogeneousState, mu, eta: float) -> tuple[np.ndarray, float]:
    """Evaluate (I+Q)^{-1} (mu, eta); updates the cached p on the state."""
    p = state.backend.solve_iplusm(mu)
    state.p = p
    if state.settings.pin_scalars:
        tau_tilde = 1.0
    else:
        tau_tilde = root_plus(mu, eta, p, state.r, state.rr)
    return p - state.r * tau_tilde, tau_tilde


def iterate(state: HomogeneousState) -> HomogeneousState:
    """One DR step: resolvent, cone projection, averaging."""
    problem = state.problem
    n = problem.n
    z_tilde, tau_tilde = resolvent_q(state, state.mu, state.eta)

    refl_z = 2.0 * z_tilde - state.mu
    refl_tau = 2.0 * tau_tilde - state.eta
    z = refl_z.copy()
    z[n:] = project_dual_cone(problem.cones, refl_z[n:])
    if state.settings.pin_scalars:
        tau = 1.0
    else:
        tau = refl_tau if refl_tau > 0.0 else 0.0

    dz = z - z_tilde
    dtau = tau - tau_tilde
    state.fp_residual = math.sqrt(float(dz @ dz) + dtau * dtau)
    state.mu += dz
    if not state.settings.pin_scalars:
        state.eta += dtau
    state.z = z
    state.tau = tau
    state.z_tilde = z_tilde
    state.tau_tilde = tau_tilde
    state.refl_z = refl_z
    state.refl_tau = refl_tau
    state.iter += 1
    return state


@dataclass
class Candidate:
    """tau-normalized solution candidate with its termination measures."""

    valid: bool
    primal: float = math.inf
    dual: float = math.inf
    gap: float = math.inf
    primal_scale: float = math.inf
    dual_scale: float = math.inf
    gap_scale: float = math.inf
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    s: np.ndarray | None = None


def extract_candidate(problem: QcpProblem, z, tau: float, v) -> Candidate:
    """Form (x, y, s) = (z_x, z_y, v_y)/tau and its residuals."""
    if not tau > TAU_MIN:
        return Candidate(valid=False)
    n = problem.n
    x = z[:n] / tau
    y = z[n:] / tau
    s = v[n:-1] / tau
    ax = spmv(problem.A, x)
    px = spmv_sym_upper(problem.P, x)
    aty = spmv(problem.A, y, transpose=True)
    xpx = float(x @ px)
    ctx = float(problem.c @ x)
    bty = float(problem.b @ y)
    primal = _norm_inf(ax + s - problem.b)
    dual = _norm_inf(px + aty + problem.c)
    gap = abs(xpx + ctx + bty)
    return Candidate(
        valid=True,
        primal=primal,
        dual=dual,
        gap=gap,
        primal_scale=max(_norm_inf(ax), _norm_inf(s), _norm_inf(problem.b)),
        dual_scale=max(_norm_inf(px), _norm_inf(aty), _norm_inf(problem.c)),
        gap_scale=max(abs(xpx), abs(ctx), abs(bty)),
        x=x,
        y=y,
        s=s,
    )


def residuals(state: HomogeneousState) -> Candidate:
    return extract_candidate(state.problem, state.z, state.tau, state.v)


def candidate_meets_tolerances(cand: Candidate, settings: SolverSettings) -> bool:
    if not cand.valid:
        return False
    return (
        cand.primal <= settings.eps_abs + settings.eps_rel * cand.primal_scale
        and cand.dual <= settings.eps_abs + settings.eps_rel * cand.dual_scale
        and cand.gap <= settings.eps_abs + settings.eps_rel * cand.gap_scale
    )


def infeasibility_certificates(
    problem: QcpProblem, z, eps_infeas: float
) -> tuple[Certificate | None, Certificate | None]:
    """Scaled certificate candidates from the iterate blocks, checked ones only."""
    n = problem.n
    primal_cert = make_primal_infeasibility_certificate(problem, z[n:])
    if primal_cert is not None and not primal_cert.residual < eps_infeas:
        primal_cert = None
    dual_cert = make_dual_infeasibility_certificate(problem, z[:n])
    if dual_cert is not None and not dual_cert.residual < eps_infeas:
        dual_cert = None
    return primal_cert, dual_cert


@dataclass
class Termination:
    status: Status
    candidate: Candidate
    certificate: Certificate | None = None
    pathological: bool = False


def check_termination(
    state: HomogeneousState,
    settings: SolverSettings,
    elapsed: float = 0.0,
) -> Termination | None:
    """Decide Solved / infeasible / limit statuses; None means continue."""
    cand = residuals(state)
    if candidate_meets_tolerances(cand, settings):
        return Termination(Status.SOLVED, cand)
    primal_cert, dual_cert = infeasibility_certificates(
        state.problem, state.z, settings.eps_infeas
    )
    if primal_cert is not None:
        return Termination(Status.PRIMAL_INFEASIBLE, cand, primal_cert)
    if dual_cert is not None:
        return Termination(Status.DUAL_INFEASIBLE, cand, dual_cert)
    if state.fp_residual < _STALL_TOL:
        # Fixed point reached but neither candidate passes: tau* = kappa* = 0.
        return Termination(Status.MAX_ITERATIONS, cand, pathological=True)
    if state.iter >= settings.max_iters:
        return Termination(Status.MAX_ITERATIONS, cand)
    if elapsed > settings.time_limit:
        return Termination(Status.TIME_LIMIT, cand)
    return None


def _trace_row(state: HomogeneousState, cand: Candidate) -> tuple:
    cert_p, cert_d = _certificate_residuals(state.problem, state.z)
    return (
        "homogeneous",
        state.iter,
        cand.primal,
        cand.dual,
        cand.gap,
        state.tau,
        state.kappa,
        state.fp_residual,
        cert_p,
        cert_d,
    )


def _certificate_residuals(problem, z) -> tuple[float, float]:
    cert_p = make_primal_infeasibility_certificate(problem, z[problem.n :])
    cert_d = make_dual_infeasibility_certificate(problem, z[: problem.n])
    return (
        cert_p.residual if cert_p is not None else math.inf,
        cert_d.residual if cert_d is not None else math.inf,
    )


def solve(
    problem: QcpProblem,
    settings: SolverSettings | None = None,
    w0: np.ndarray | None = None,
    trace: list | None = None,
) -> SolveResult:
    """Run the homogeneous-embedding engine until a terminal status."""
    settings = settings or SolverSettings()
    start = time.perf_counter()
    state = initialize(problem, settings, w0=w0)
    term = None
    while term is None:
        iterate(state)
        at_check = (
            state.iter % settings.check_interval == 0
            or state.iter >= settings.max_iters
        )
        if not at_check:
            continue
        term = check_termination(state, settings, elapsed=time.perf_counter() - start)
        if trace is not None:
            cand = term.candidate if term is not None else residuals(state)
            trace.append(_trace_row(state, cand))
    return _build_result(state, term, time.perf_counter() - start)


def _build_result(state, term: Termination, elapsed: float) -> SolveResult:
    cand = term.candidate
    result = SolveResult(
        status=term.status,
        iterations=state.iter,
        solve_time=elapsed,
        primal_res=cand.primal,
        dual_res=cand.dual,
        gap=cand.gap,
        certificate=term.certificate,
    )
    if term.status == Status.SOLVED or (
        term.status in (Status.MAX_ITERATIONS, Status.TIME_LIMIT) and cand.valid
    ):
        result.x, result.y, result.s = cand.x, cand.y, cand.s
    if term.pathological:
        result.diagnostics["pathological"] = True
    result.diagnostics["fp_residual"] = state.fp_residual
    return result


def _norm_inf(vec) -> float:
    return float(np.max(np.abs(vec), initial=0.0))
