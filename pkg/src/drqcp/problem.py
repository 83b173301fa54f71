"""QCP data model, validation, the LCP view, and on-disk formats.

The primal-dual pair is

    minimize    (1/2) x'Px + c'x        maximize   -(1/2) x'Px - b'y
    subject to  Ax + s = b, s in K      subject to Px + A'y + c = 0, y in K*,

with P symmetric PSD (upper triangle stored) and K an ordered product of
primitive cones. Stationarity plus complementarity is equivalent to the
complementarity problem

    R^n x K*  ∋  (x, y)  _|_  M (x, y) + q  ∈  {0}^n x K,

with M = [[P, A'], [-A, 0]] and q = (c, b); M is monotone because P is PSD.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cones import (
    Box,
    ConeSpec,
    Free,
    NonNegative,
    SecondOrder,
    Zero,
    cone_distance,
    dual_cone_distance,
    project_cone,
    project_dual_cone,
)
from .linalg import SparseMatrix, spmv, spmv_sym_upper


class ValidationError(ValueError):
    """Problem data violates a structural invariant; ``errors`` lists them."""

    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


class ProblemFormatError(ValueError):
    """Problem or result file does not match the JSON schema."""


class Status(str, enum.Enum):
    SOLVED = "solved"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    DUAL_INFEASIBLE = "dual_infeasible"
    MAX_ITERATIONS = "max_iterations"
    TIME_LIMIT = "time_limit"


# Normative ordering of cone blocks (rows of A are grouped this way).
_CONE_ORDER = {Zero: 0, NonNegative: 1, Box: 2, SecondOrder: 3}


@dataclass
class QcpProblem:
    """Validated QCP data. Immutable by convention once validated."""

    n: int
    m: int
    P: SparseMatrix
    A: SparseMatrix
    c: np.ndarray
    b: np.ndarray
    cones: ConeSpec

    def __post_init__(self):
        self.c = np.ascontiguousarray(self.c, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)

    @property
    def d(self) -> int:
        return self.n + self.m

    def objective(self, x) -> float:
        return 0.5 * float(x @ spmv_sym_upper(self.P, x)) + float(self.c @ x)


def validate(p: QcpProblem, strict_psd: bool = False) -> list[str]:
    """Return a list of invariant violations (empty when well formed)."""
    errors = []
    for mat, name, shape in ((p.P, "P", (p.n, p.n)), (p.A, "A", (p.m, p.n))):
        if (mat.nrows, mat.ncols) != shape:
            errors.append(f"{name}: shape {(mat.nrows, mat.ncols)} != {shape}")
            continue
        try:
            mat.check()
        except ValueError as e:
            errors.append(f"{name}: {e}")
    if not errors and np.any(p.P.rowidx > p.P.colind):
        errors.append("P: entries below the diagonal (upper triangle required)")
    for vec, name, size in ((p.c, "c", p.n), (p.b, "b", p.m)):
        if len(vec) != size:
            errors.append(f"{name}: length {len(vec)} != {size}")
        else:
            bad = np.nonzero(~np.isfinite(vec))[0]
            if len(bad):
                errors.append(f"{name}[{bad[0]}]: not finite")
    if p.cones.total_dim != p.m:
        errors.append(
            f"cones: cone dimension mismatch (total_dim {p.cones.total_dim} != m {p.m})"
        )
    if any(isinstance(blk, Free) for _, blk in p.cones):
        errors.append("cones: free cone not allowed in constraint cone list")
    ranks = [_CONE_ORDER[type(blk)] for _, blk in p.cones if type(blk) in _CONE_ORDER]
    if any(r2 < r1 for r1, r2 in zip(ranks, ranks[1:])):
        errors.append("cones: blocks must be ordered zero, nonneg, box, soc")
    if strict_psd and not errors and p.n:
        dense = p.P.to_dense()
        evals = np.linalg.eigvalsh(dense + np.triu(dense, 1).T)
        if evals.min() < -1e-8 * max(1.0, evals.max()):
            errors.append(f"P: not positive semidefinite (min eigenvalue {evals.min():.3e})")
    return errors


def validate_or_raise(p: QcpProblem, strict_psd: bool = False) -> QcpProblem:
    errors = validate(p, strict_psd=strict_psd)
    if errors:
        raise ValidationError(errors)
    return p


@dataclass
class LcpView:
    """The complementarity-problem view of a QCP.

    The cone is R^n x K* (free block, then the dual of the constraint
    cone); M is applied implicitly through P and A.
    """

    problem: QcpProblem
    d: int
    q: np.ndarray

    @property
    def cones(self) -> ConeSpec:
        return self.problem.cones

    def apply_m(self, z) -> np.ndarray:
        """M z = (P z_x + A' z_y, -A z_x)."""
        p = self.problem
        zx, zy = z[: p.n], z[p.n :]
        top = spmv_sym_upper(p.P, zx) + spmv(p.A, zy, transpose=True)
        return np.concatenate([top, -spmv(p.A, zx)])

    def project_c(self, z) -> np.ndarray:
        """Projection onto R^n x K*."""
        p = self.problem
        out = np.array(z, dtype=np.float64, copy=True)
        out[p.n :] = project_dual_cone(p.cones, z[p.n :])
        return out


def to_lcp(p: QcpProblem) -> LcpView:
    return LcpView(problem=p, d=p.n + p.m, q=np.concatenate([p.c, p.b]))


@dataclass
class Certificate:
    """Normalized infeasibility certificate.

    Primal infeasibility (dual unboundedness): y with b'y = -1, y in K*,
    and residual = ||A'y||_inf. Dual infeasibility (primal unboundedness):
    x with c'x = -1, s = proj_K(-Ax), and residual =
    max(||Px||_inf, ||Ax+s||_inf).
    """

    kind: Status
    residual: float
    y: np.ndarray | None = None
    x: np.ndarray | None = None
    s: np.ndarray | None = None


def make_primal_infeasibility_certificate(p: QcpProblem, y_raw) -> Certificate | None:
    """Scale a candidate to b'y = -1; None when b'y >= 0."""
    y_raw = np.asarray(y_raw, dtype=np.float64)
    if not np.all(np.isfinite(y_raw)):
        return None
    bty = float(p.b @ y_raw)
    if not bty < 0:
        return None
    y = y_raw / (-bty)
    resid = float(np.max(np.abs(spmv(p.A, y, transpose=True)), initial=0.0))
    return Certificate(kind=Status.PRIMAL_INFEASIBLE, residual=resid, y=y)


def make_dual_infeasibility_certificate(p: QcpProblem, x_raw) -> Certificate | None:
    """Scale a candidate to c'x = -1; None when c'x >= 0.

    The slack is reported as proj_K(-Ax), making ||Ax+s||_inf the cone
    projection distance of -Ax.
    """
    x_raw = np.asarray(x_raw, dtype=np.float64)
    if not np.all(np.isfinite(x_raw)):
        return None
    ctx = float(p.c @ x_raw)
    if not ctx < 0:
        return None
    x = x_raw / (-ctx)
    ax = spmv(p.A, x)
    s = project_cone(p.cones, -ax)
    resid = max(
        float(np.max(np.abs(spmv_sym_upper(p.P, x)), initial=0.0)),
        float(np.max(np.abs(ax + s), initial=0.0)),
    )
    return Certificate(kind=Status.DUAL_INFEASIBLE, residual=resid, x=x, s=s)


def verify_certificate(
    p: QcpProblem,
    cert: Certificate,
    eps_infeas: float,
    membership_tol: float = 1e-9,
) -> bool:
    """Check a certificate against the alternative-system conditions."""
    if cert.kind == Status.PRIMAL_INFEASIBLE:
        if cert.y is None or len(cert.y) != p.m:
            return False
        if abs(p.b @ cert.y + 1.0) > 1e-8:
            return False
        if dual_cone_distance(p.cones, cert.y) > membership_tol:
            return False
        resid = float(np.max(np.abs(spmv(p.A, cert.y, transpose=True)), initial=0.0))
        return resid < eps_infeas
    if cert.kind == Status.DUAL_INFEASIBLE:
        if cert.x is None or len(cert.x) != p.n:
            return False
        if abs(p.c @ cert.x + 1.0) > 1e-8:
            return False
        s = cert.s
        if s is None or len(s) != p.m:
            return False
        if cone_distance(p.cones, s) > membership_tol:
            return False
        resid = max(
            float(np.max(np.abs(spmv_sym_upper(p.P, cert.x)), initial=0.0)),
            float(np.max(np.abs(spmv(p.A, cert.x) + s), initial=0.0)),
        )
        return resid < eps_infeas
    return False


@dataclass
class SolveResult:
    status: Status
    iterations: int
    solve_time: float
    primal_res: float = math.inf
    dual_res: float = math.inf
    gap: float = math.inf
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    s: np.ndarray | None = None
    certificate: Certificate | None = None
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# JSON formats


_CONE_TAGS = {"zero": Zero, "nonneg": NonNegative, "box": Box, "soc": SecondOrder}


def _matrix_to_dict(mat: SparseMatrix) -> dict:
    return {
        "ncols": mat.ncols,
        "colptr": mat.colptr.tolist(),
        "rowidx": mat.rowidx.tolist(),
        "values": mat.values.tolist(),
    }


def _matrix_from_dict(obj, nrows, key) -> SparseMatrix:
    try:
        mat = SparseMatrix(
            nrows=nrows,
            ncols=int(obj["ncols"]),
            colptr=np.asarray(obj["colptr"], dtype=np.int64),
            rowidx=np.asarray(obj["rowidx"], dtype=np.int64),
            values=np.asarray(obj["values"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ProblemFormatError(f"{key}: {e}") from e
    try:
        mat.check()
    except ValueError as e:
        raise ProblemFormatError(f"{key}: {e}") from e
    return mat


def cones_to_list(spec: ConeSpec) -> list[dict]:
    out = []
    for _, blk in spec:
        if isinstance(blk, Zero):
            out.append({"type": "zero", "dim": blk.dim})
        elif isinstance(blk, NonNegative):
            out.append({"type": "nonneg", "dim": blk.dim})
        elif isinstance(blk, Box):
            out.append({"type": "box", "l": blk.l.tolist(), "u": blk.u.tolist()})
        elif isinstance(blk, SecondOrder):
            out.append({"type": "soc", "dim": blk.dim})
        else:
            raise ValueError(f"cannot serialize cone block {blk!r}")
    return out


def cones_from_list(items) -> ConeSpec:
    blocks = []
    for k, item in enumerate(items):
        tag = item.get("type")
        if tag not in _CONE_TAGS:
            raise ProblemFormatError(f"cones[{k}]: unknown type {tag!r}")
        try:
            if tag == "box":
                blocks.append(Box(item["l"], item["u"]))
            else:
                blocks.append(_CONE_TAGS[tag](int(item["dim"])))
        except (KeyError, TypeError, ValueError) as e:
            raise ProblemFormatError(f"cones[{k}]: {e}") from e
    try:
        return ConeSpec(blocks)
    except ValueError as e:
        raise ProblemFormatError(f"cones: {e}") from e


def problem_to_dict(p: QcpProblem) -> dict:
    return {
        "n": p.n,
        "m": p.m,
        "P": _matrix_to_dict(p.P),
        "A": _matrix_to_dict(p.A),
        "c": p.c.tolist(),
        "b": p.b.tolist(),
        "cones": cones_to_list(p.cones),
    }


def problem_from_dict(obj: dict) -> QcpProblem:
    for key in ("n", "m", "P", "A", "c", "b", "cones"):
        if key not in obj:
            raise ProblemFormatError(f"missing key {key!r}")
    n, m = int(obj["n"]), int(obj["m"])
    p = QcpProblem(
        n=n,
        m=m,
        P=_matrix_from_dict(obj["P"], n, "P"),
        A=_matrix_from_dict(obj["A"], m, "A"),
        c=np.asarray(obj["c"], dtype=np.float64),
        b=np.asarray(obj["b"], dtype=np.float64),
        cones=cones_from_list(obj["cones"]),
    )
    return validate_or_raise(p)


def read_problem(path) -> QcpProblem:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise ProblemFormatError(f"{path}: line {e.lineno}: {e.msg}") from e
    return problem_from_dict(obj)


def write_problem(p: QcpProblem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(problem_to_dict(p), fh)
        fh.write("\n")


def certificate_to_dict(cert: Certificate | None) -> dict | None:
    if cert is None:
        return None
    out = {"kind": cert.kind.value, "residual": cert.residual}
    for name in ("x", "y", "s"):
        vec = getattr(cert, name)
        out[name] = None if vec is None else np.asarray(vec).tolist()
    return out


def result_to_dict(r: SolveResult) -> dict:
    return {
        "status": r.status.value,
        "x": None if r.x is None else np.asarray(r.x).tolist(),
        "y": None if r.y is None else np.asarray(r.y).tolist(),
        "s": None if r.s is None else np.asarray(r.s).tolist(),
        "certificate": certificate_to_dict(r.certificate),
        "iterations": r.iterations,
        "residuals": {"primal": r.primal_res, "dual": r.dual_res, "gap": r.gap},
        "solve_time_s": r.solve_time,
    }


def result_from_dict(obj: dict) -> SolveResult:
    try:
        status = Status(obj["status"])
    except (KeyError, ValueError) as e:
        raise ProblemFormatError(f"status: {e}") from e
    cert = None
    cobj = obj.get("certificate")
    if cobj is not None:
        cert = Certificate(
            kind=Status(cobj["kind"]),
            residual=float(cobj["residual"]),
            y=None if cobj.get("y") is None else np.asarray(cobj["y"], dtype=np.float64),
            x=None if cobj.get("x") is None else np.asarray(cobj["x"], dtype=np.float64),
            s=None if cobj.get("s") is None else np.asarray(cobj["s"], dtype=np.float64),
        )
    res = obj.get("residuals", {})
    return SolveResult(
        status=status,
        iterations=int(obj["iterations"]),
        solve_time=float(obj["solve_time_s"]),
        primal_res=float(res.get("primal", math.inf)),
        dual_res=float(res.get("dual", math.inf)),
        gap=float(res.get("gap", math.inf)),
        x=None if obj.get("x") is None else np.asarray(obj["x"], dtype=np.float64),
        y=None if obj.get("y") is None else np.asarray(obj["y"], dtype=np.float64),
        s=None if obj.get("s") is None else np.asarray(obj["s"], dtype=np.float64),
        certificate=cert,
    )


def write_result(r: SolveResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result_to_dict(r), fh)
        fh.write("\n")


def read_result(path) -> SolveResult:
    with open(path, "r", encoding="utf-8") as fh:
        return result_from_dict(json.load(fh))
