"""Cone primitives, Euclidean projections, and membership tests.

A cone spec is an ordered Cartesian product of primitives. Projections
run blockwise; dual-cone projections go through the Moreau decomposition

    x = proj_C(x) - proj_Cstar(-x),   proj_C(x) _|_ proj_Cstar(-x),

so only the primal projection of each primitive is ever implemented.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_BOX_NEWTON_TOL = 1e-12
_BOX_NEWTON_MAX_ITERS = 100


@dataclass(frozen=True)
class Free:
    dim: int


@dataclass(frozen=True)
class Zero:
    dim: int


@dataclass(frozen=True)
class NonNegative:
    dim: int


@dataclass(frozen=True)
class SecondOrder:
    """{(t, v) : ||v||_2 <= t}; dim counts t plus the v entries."""

    dim: int


class Box:
    """{(t, s) : t*l <= s <= t*u, t >= 0}; dim is 1 + len(l)."""

    def __init__(self, l, u):
        self.l = np.asarray(l, dtype=np.float64)
        self.u = np.asarray(u, dtype=np.float64)

    @property
    def dim(self) -> int:
        return 1 + len(self.l)

    def __eq__(self, other):
        return (
            isinstance(other, Box)
            and np.array_equal(self.l, other.l)
            and np.array_equal(self.u, other.u)
        )

    def __repr__(self):
        return f"Box(l={self.l.tolist()}, u={self.u.tolist()})"


Primitive = Free | Zero | NonNegative | Box | SecondOrder


class ConeSpec:
    """Ordered Cartesian product of primitive cones."""

    def __init__(self, blocks):
        self.blocks = tuple(blocks)
        for blk in self.blocks:
            if blk.dim < 1:
                raise ValueError(f"cone block {blk!r} has dimension < 1")
            if isinstance(blk, Box):
                _check_box_bounds(blk.l, blk.u)
        self.total_dim = sum(blk.dim for blk in self.blocks)

    def __iter__(self):
        offset = 0
        for blk in self.blocks:
            yield offset, blk
            offset += blk.dim

    def __eq__(self, other):
        return isinstance(other, ConeSpec) and self.blocks == other.blocks

    def __repr__(self):
        return f"ConeSpec({list(self.blocks)!r})"


def _check_box_bounds(l, u):
    if len(l) != len(u):
        raise ValueError("box cone bounds must have equal length")
    if np.any(np.isnan(l)) or np.any(np.isnan(u)):
        raise ValueError("box cone bounds contain NaN")
    if np.any(l == np.inf) or np.any(u == -np.inf):
        raise ValueError("box cone bounds are empty (l=+inf or u=-inf)")
    finite = np.isfinite(l) & np.isfinite(u)
    if np.any(l[finite] > u[finite]):
        raise ValueError("box cone requires l <= u elementwise")


def _project_soc(x):
    t, v = x[0], x[1:]
    nv = np.linalg.norm(v)
    if nv <= t:
        return x.copy()
    if nv <= -t:
        return np.zeros_like(x)
    alpha = 0.5 * (t + nv)
    out = np.empty_like(x)
    out[0] = alpha
    out[1:] = (alpha / nv) * v
    return out


def _box_bounds_at(l, u, t):
    """Scaled bounds t*l, t*u for t >= 0, keeping infinities infinite."""
    lb = np.where(np.isfinite(l), t * l, -np.inf)
    ub = np.where(np.isfinite(u), t * u, np.inf)
    return lb, ub


def _box_t_residual(t, t0, s0, l, u):
    """Derivative (halved) of the scalar objective in t; increasing in t."""
    lb, ub = _box_bounds_at(l, u, t)
    r = t - t0
    hi = s0 > ub
    lo = s0 < lb
    if np.any(hi):
        r += np.dot(ub[hi] - s0[hi], u[hi])
    if np.any(lo):
        r += np.dot(lb[lo] - s0[lo], l[lo])
    return r


def project_box_cone(l, u, t: float, s) -> tuple[float, np.ndarray]:
    """Project (t, s) onto {(t, s) : t*l <= s <= t*u, t >= 0}.

    Newton's method on the scalar t (the per-coordinate minimizer for
    fixed t is a clamp, leaving a piecewise-linear increasing residual in
    t), with a bisection fallback if Newton stalls on a kink.
    """
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    _check_box_bounds(l, u)
    if len(s) != len(l):
        raise ValueError("box cone: s has wrong length")

    scale = max(1.0, abs(t), float(np.max(np.abs(s), initial=0.0)))
    if _box_t_residual(0.0, t, s, l, u) >= 0.0:
        t_new = 0.0
    else:
        t_new = max(t, 0.0)
        converged = False
        for _ in range(_BOX_NEWTON_MAX_ITERS):
            r = _box_t_residual(t_new, t, s, l, u)
            if abs(r) <= _BOX_NEWTON_TOL * scale:
                converged = True
                break
            lb, ub = _box_bounds_at(l, u, t_new)
            slope = 1.0 + np.sum(u[s > ub] ** 2) + np.sum(l[s < lb] ** 2)
            step = r / slope
            t_next = t_new - step
            if t_next < 0.0:
                t_next = 0.5 * t_new
            t_new = t_next
        if not converged:
            # Bisection safeguard: residual is increasing, root is bracketed.
            t_hi = max(t_new, 1.0)
            while _box_t_residual(t_hi, t, s, l, u) < 0.0:
                t_hi *= 2.0
            t_lo = 0.0
            for _ in range(200):
                mid = 0.5 * (t_lo + t_hi)
                if _box_t_residual(mid, t, s, l, u) < 0.0:
                    t_lo = mid
                else:
                    t_hi = mid
            t_new = 0.5 * (t_lo + t_hi)
    lb, ub = _box_bounds_at(l, u, t_new)
    return t_new, np.clip(s, lb, ub)


def _project_block(blk: Primitive, x: np.ndarray) -> np.ndarray:
    if isinstance(blk, Free):
        return x.copy()
    if isinstance(blk, Zero):
        return np.zeros_like(x)
    if isinstance(blk, NonNegative):
        return np.maximum(x, 0.0)
    if isinstance(blk, SecondOrder):
        return _project_soc(x)
    if isinstance(blk, Box):
        t, s = project_box_cone(blk.l, blk.u, x[0], x[1:])
        return np.concatenate([[t], s])
    raise TypeError(f"unknown cone primitive {blk!r}")


def project_cone(spec: ConeSpec, x) -> np.ndarray:
    """Blockwise Euclidean projection onto the cone."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) != spec.total_dim:
        raise ValueError(f"expected vector of length {spec.total_dim}, got {len(x)}")
    out = np.empty_like(x)
    for offset, blk in spec:
        out[offset : offset + blk.dim] = _project_block(blk, x[offset : offset + blk.dim])
    return out


def project_dual_cone(spec: ConeSpec, x) -> np.ndarray:
    """Euclidean projection onto the dual cone, via Moreau decomposition."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) != spec.total_dim:
        raise ValueError(f"expected vector of length {spec.total_dim}, got {len(x)}")
    out = np.empty_like(x)
    for offset, blk in spec:
        xb = x[offset : offset + blk.dim]
        if isinstance(blk, Free):
            out[offset : offset + blk.dim] = 0.0
        elif isinstance(blk, Zero):
            out[offset : offset + blk.dim] = xb
        elif isinstance(blk, NonNegative):
            out[offset : offset + blk.dim] = np.maximum(xb, 0.0)
        elif isinstance(blk, SecondOrder):
            out[offset : offset + blk.dim] = _project_soc(xb)
        else:
            out[offset : offset + blk.dim] = xb + _project_block(blk, -xb)
    return out


def cone_distance(spec: ConeSpec, x) -> float:
    """Max-norm distance to the cone, ||x - proj_C(x)||_inf."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        return 0.0
    return float(np.max(np.abs(x - project_cone(spec, x))))


def dual_cone_distance(spec: ConeSpec, x) -> float:
    """Max-norm distance to the dual cone."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        return 0.0
    return float(np.max(np.abs(x - project_dual_cone(spec, x))))


def in_cone(spec: ConeSpec, x, tol: float) -> bool:
    """True iff dist_inf(x, C) <= tol."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return cone_distance(spec, x) <= tol


def in_dual_cone(spec: ConeSpec, x, tol: float) -> bool:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return dual_cone_distance(spec, x) <= tol
