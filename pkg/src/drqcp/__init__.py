"""Douglas-Rachford quadratic cone programming solver.

Solves convex quadratic cone programs

    minimize    (1/2) x'Px + c'x
    subject to  Ax + s = b,  s in K,

returning a primal-dual solution when one exists or a certificate of
primal/dual infeasibility otherwise. The main engine runs DR splitting on
a homogeneous embedding of the equivalent linear complementarity problem;
a baseline engine applies DR splitting to the LCP directly and detects
infeasibility from diverging iterates.
"""

from .cones import (
    Box,
    ConeSpec,
    Free,
    NonNegative,
    SecondOrder,
    Zero,
    in_cone,
    project_box_cone,
    project_cone,
    project_dual_cone,
)
from .engine_direct import solve_direct
from .engine_homogeneous import SolverSettings, solve
from .linalg import SparseMatrix
from .probgen import GenSpec, gen_feasible, gen_infeasible, gen_unbounded
from .problem import (
    Certificate,
    QcpProblem,
    SolveResult,
    Status,
    read_problem,
    write_problem,
    write_result,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "Certificate",
    "ConeSpec",
    "Free",
    "GenSpec",
    "NonNegative",
    "QcpProblem",
    "SecondOrder",
    "SolveResult",
    "SolverSettings",
    "SparseMatrix",
    "Status",
    "Zero",
    "gen_feasible",
    "gen_infeasible",
    "gen_unbounded",
    "in_cone",
    "project_box_cone",
    "project_cone",
    "project_dual_cone",
    "read_problem",
    "solve",
    "solve_direct",
    "write_problem",
    "write_result",
]
