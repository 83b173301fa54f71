"""Sparse matrix storage and the KKT solve backends.

Matrices use compressed sparse column (CSC) storage. Symmetric matrices
(the quadratic cost term and the assembled KKT system) store the upper
triangle only; products expand the symmetry implicitly.

The quasidefinite KKT matrix ``[[I+P, A^T], [A, -I]]`` is factored once as
a sparse permuted LDL^T (no pivoting is needed: quasidefiniteness
guarantees the factorization exists under any symmetric permutation) and
the cached factors are reused for every subsequent solve. An indirect
backend solves the same system with a Jacobi-preconditioned conjugate
gradient on the eliminated positive definite form ``I + P + A^T A``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import get_blas_funcs


class FactorizationError(RuntimeError):
    """LDL^T hit a zero or non-finite pivot (bad data or non-PSD P)."""


class CgConvergenceError(RuntimeError):
    """CG hit its iteration cap; ``best`` carries the last iterate pair."""

    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


@dataclass
class SparseMatrix:
    """CSC matrix with int64 index arrays and float64 values."""

    nrows: int
    ncols: int
    colptr: np.ndarray
    rowidx: np.ndarray
    values: np.ndarray
    _colind: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.colptr = np.ascontiguousarray(self.colptr, dtype=np.int64)
        self.rowidx = np.ascontiguousarray(self.rowidx, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def colind(self) -> np.ndarray:
        """Column index of every stored entry (lazy, cached)."""
        if self._colind is None:
            self._colind = np.repeat(
                np.arange(self.ncols, dtype=np.int64), np.diff(self.colptr)
            )
        return self._colind

    def check(self) -> None:
        """Raise ValueError on any structural invariant violation."""
        if self.nrows < 0 or self.ncols < 0:
            raise ValueError("negative dimension")
        if len(self.colptr) != self.ncols + 1:
            raise ValueError("colptr must have length ncols+1")
        if self.colptr[0] != 0:
            raise ValueError("colptr[0] must be 0")
        if np.any(np.diff(self.colptr) < 0):
            raise ValueError("colptr must be nondecreasing")
        if self.colptr[-1] != len(self.rowidx) or len(self.rowidx) != len(self.values):
            raise ValueError("colptr[-1] must equal len(rowidx) == len(values)")
        if self.nnz:
            if self.rowidx.min() < 0 or self.rowidx.max() >= self.nrows:
                raise ValueError("row index out of range")
            for j in range(self.ncols):
                lo, hi = self.colptr[j], self.colptr[j + 1]
                if hi - lo > 1 and np.any(np.diff(self.rowidx[lo:hi]) <= 0):
                    raise ValueError(f"row indices not strictly increasing in column {j}")
            if not np.all(np.isfinite(self.values)):
                raise ValueError("matrix contains NaN or Inf")

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.nrows, self.ncols))
        out[self.rowidx, self.colind] = self.values
        return out

    @classmethod
    def from_dense(cls, arr, drop_tol: float = 0.0) -> "SparseMatrix":
        arr = np.asarray(arr, dtype=np.float64)
        rows, cols = np.nonzero(np.abs(arr) > drop_tol)
        return cls.from_coo(arr.shape[0], arr.shape[1], rows, cols, arr[rows, cols])

    @classmethod
    def from_coo(cls, nrows, ncols, rows, cols, vals) -> "SparseMatrix":
        """Build CSC from triplets, summing duplicate positions."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((rows, cols))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows):
            keep = np.empty(len(rows), dtype=bool)
            keep[0] = True
            keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            group = np.cumsum(keep) - 1
            vals = np.bincount(group, weights=vals)
            rows, cols = rows[keep], cols[keep]
        colptr = np.zeros(ncols + 1, dtype=np.int64)
        np.add.at(colptr, cols + 1, 1)
        np.cumsum(colptr, out=colptr)
        return cls(nrows, ncols, colptr, rows, vals)


def spmv(A: SparseMatrix, x: np.ndarray, transpose: bool = False) -> np.ndarray:
    """``A @ x`` or ``A.T @ x`` for CSC ``A``."""
    x = np.asarray(x, dtype=np.float64)
    if transpose:
        if len(x) != A.nrows:
            raise ValueError(f"spmv: expected vector of length {A.nrows}, got {len(x)}")
        if A.nnz == 0:
            return np.zeros(A.ncols)
        return np.bincount(A.colind, weights=A.values * x[A.rowidx], minlength=A.ncols)
    if len(x) != A.ncols:
        raise ValueError(f"spmv: expected vector of length {A.ncols}, got {len(x)}")
    if A.nnz == 0:
        return np.zeros(A.nrows)
    return np.bincount(A.rowidx, weights=A.values * x[A.colind], minlength=A.nrows)


def spmv_sym_upper(P: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """Symmetric product for a matrix stored as its upper triangle."""
    x = np.asarray(x, dtype=np.float64)
    if P.nrows != P.ncols or len(x) != P.ncols:
        raise ValueError("spmv_sym_upper: dimension mismatch")
    if P.nnz == 0:
        return np.zeros(P.ncols)
    y = np.bincount(P.rowidx, weights=P.values * x[P.colind], minlength=P.nrows)
    strict = P.rowidx != P.colind
    if np.any(strict):
        y += np.bincount(
            P.colind[strict],
            weights=P.values[strict] * x[P.rowidx[strict]],
            minlength=P.ncols,
        )
    return y


def sym_diag(P: SparseMatrix) -> np.ndarray:
    """Diagonal of a symmetric matrix stored as its upper triangle."""
    d = np.zeros(P.ncols)
    on_diag = P.rowidx == P.colind
    d[P.rowidx[on_diag]] = P.values[on_diag]
    return d


@dataclass
class KktSystem:
    """Quasidefinite system [[I+P, A^T], [A, -I]], upper triangle stored."""

    n: int
    m: int
    P: SparseMatrix
    A: SparseMatrix
    assembled: SparseMatrix


def assemble_kkt(P: SparseMatrix, A: SparseMatrix) -> KktSystem:
    """Assemble the upper triangle of [[I+P, A^T], [A, -I]]."""
    n, m = P.ncols, A.nrows
    if P.nrows != n:
        raise ValueError("P must be square")
    if A.ncols != n:
        raise ValueError(f"A has {A.ncols} columns, expected {n}")
    if np.any(P.rowidx > P.colind):
        raise ValueError("P must be stored as its upper triangle")
    for M, name in ((P, "P"), (A, "A")):
        if M.nnz and not np.all(np.isfinite(M.values)):
            raise ValueError(f"{name} contains NaN or Inf")
    rows = np.concatenate([
        P.rowidx,
        np.arange(n, dtype=np.int64),            # +I on the (1,1) block
        A.colind,                                # A^T block: (j, n+i)
        np.arange(n, n + m, dtype=np.int64),     # -I on the (2,2) block
    ])
    cols = np.concatenate([
        P.colind,
        np.arange(n, dtype=np.int64),
        A.rowidx + n,
        np.arange(n, n + m, dtype=np.int64),
    ])
    vals = np.concatenate([P.values, np.ones(n), A.values, -np.ones(m)])
    assembled = SparseMatrix.from_coo(n + m, n + m, rows, cols, vals)
    return KktSystem(n=n, m=m, P=P, A=A, assembled=assembled)


def minimum_degree_ordering(K: SparseMatrix) -> np.ndarray:
    """Greedy minimum-degree ordering of a symmetric (upper CSC) pattern."""
    n = K.ncols
    adj = [set() for _ in range(n)]
    for i, j in zip(K.rowidx, K.colind):
        if i != j:
            adj[i].add(int(j))
            adj[j].add(int(i))
    alive = np.ones(n, dtype=bool)
    deg = np.array([len(a) for a in adj], dtype=np.int64)
    perm = np.empty(n, dtype=np.int64)
    for k in range(n):
        cand = np.nonzero(alive)[0]
        v = int(cand[np.argmin(deg[cand])])
        perm[k] = v
        alive[v] = False
        nbrs = adj[v]
        for u in nbrs:
            au = adj[u]
            au.discard(v)
            au.update(w for w in nbrs if w != u)
            deg[u] = len(au)
        adj[v] = set()
    return perm


def _sym_perm_upper(K: SparseMatrix, perm: np.ndarray) -> SparseMatrix:
    """Upper triangle of K[perm][:, perm] given upper-triangular K."""
    n = K.ncols
    pinv = np.empty(n, dtype=np.int64)
    pinv[perm] = np.arange(n, dtype=np.int64)
    r = pinv[K.rowidx]
    c = pinv[K.colind]
    rows = np.minimum(r, c)
    cols = np.maximum(r, c)
    return SparseMatrix.from_coo(n, n, rows, cols, K.values)


def _etree(n, colptr, rowidx):
    """Elimination tree of an upper-triangular CSC pattern."""
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    for j in range(n):
        for p in range(colptr[j], colptr[j + 1]):
            i = rowidx[p]
            while i != -1 and i < j:
                nxt = ancestor[i]
                ancestor[i] = j
                if nxt == -1:
                    parent[i] = j
                i = nxt
    return parent


@dataclass
class KktFactorization:
    """Permuted LDL^T factors of an assembled KKT system.

    ``L`` is unit lower triangular in CSC form and ``D`` a diagonal with
    exactly n positive and m negative entries (the quasidefinite
    signature). Dense copies of the factors are cached for fast BLAS
    triangular solves; each solve call works on its own buffers, so one
    factorization may serve concurrent solves.
    """

    n: int
    m: int
    permutation: np.ndarray
    L: SparseMatrix
    D: np.ndarray
    _dense_L: np.ndarray = field(default=None, repr=False, compare=False)
    _dinv: np.ndarray = field(default=None, repr=False, compare=False)
    _trsv: object = field(default=None, repr=False, compare=False)

    @property
    def num_positive(self) -> int:
        return int(np.sum(self.D > 0))

    @property
    def num_negative(self) -> int:
        return int(np.sum(self.D < 0))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return solve_kkt_direct(self, rhs)


def factor_kkt(sys: KktSystem, permutation="amd") -> KktFactorization:
    """Sparse LDL^T of the assembled KKT matrix under a symmetric permutation.

    ``permutation`` is "amd" (greedy minimum degree, default), "identity",
    or an explicit permutation array.
    """
    K = sys.assembled
    d = K.ncols
    if isinstance(permutation, str):
        if permutation == "amd":
            perm = minimum_degree_ordering(K)
        elif permutation == "identity":
            perm = np.arange(d, dtype=np.int64)
        else:
            raise ValueError(f"unknown permutation choice {permutation!r}")
    else:
        perm = np.asarray(permutation, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(d)):
            raise ValueError("permutation is not a permutation of 0..d-1")

    Kp = _sym_perm_upper(K, perm)
    colptr, rowidx, values = Kp.colptr, Kp.rowidx, Kp.values
    parent = _etree(d, colptr, rowidx)

    # Column nonzero counts of L via elimination-tree path walks.
    Lnz = np.zeros(d, dtype=np.int64)
    work = np.full(d, -1, dtype=np.int64)
    for j in range(d):
        work[j] = j
        for p in range(colptr[j], colptr[j + 1]):
            i = rowidx[p]
            while work[i] != j:
                Lnz[i] += 1
                work[i] = j
                i = parent[i]

    Lp = np.zeros(d + 1, dtype=np.int64)
    np.cumsum(Lnz, out=Lp[1:])
    Li = np.zeros(Lp[-1], dtype=np.int64)
    Lx = np.zeros(Lp[-1])
    D = np.zeros(d)
    Dinv = np.zeros(d)

    # Up-looking factorization: for row k, sparse-solve L[:k,:k] y = K[:k,k]
    # walking the pattern in elimination-tree topological order.
    y_val = np.zeros(d)
    y_marked = np.zeros(d, dtype=bool)
    y_idx = np.zeros(d, dtype=np.int64)
    elim = np.zeros(d, dtype=np.int64)
    next_space = Lp[:-1].copy()
    for k in range(d):
        nnz_y = 0
        dk = 0.0
        for p in range(colptr[k], colptr[k + 1]):
            b = rowidx[p]
            if b == k:
                dk = values[p]
                continue
            y_val[b] = values[p]
            if not y_marked[b]:
                y_marked[b] = True
                elim[0] = b
                nnz_e = 1
                nxt = parent[b]
                while nxt != -1 and nxt < k and not y_marked[nxt]:
                    y_marked[nxt] = True
                    elim[nnz_e] = nxt
                    nnz_e += 1
                    nxt = parent[nxt]
                while nnz_e > 0:
                    nnz_e -= 1
                    y_idx[nnz_y] = elim[nnz_e]
                    nnz_y += 1
        for i in range(nnz_y - 1, -1, -1):
            c = y_idx[i]
            yc = y_val[c]
            hi = next_space[c]
            for q in range(Lp[c], hi):
                y_val[Li[q]] -= Lx[q] * yc
            lkc = yc * Dinv[c]
            Li[hi] = k
            Lx[hi] = lkc
            dk -= yc * lkc
            next_space[c] += 1
            y_val[c] = 0.0
            y_marked[c] = False
        if dk == 0.0 or not np.isfinite(dk):
            raise FactorizationError(
                f"zero or non-finite pivot at column {k}; "
                "check data for NaN/Inf or a non-PSD quadratic term"
            )
        D[k] = dk
        Dinv[k] = 1.0 / dk

    L = SparseMatrix(d, d, Lp, Li, Lx)
    dense_L = L.to_dense()
    np.fill_diagonal(dense_L, 1.0)
    trsv = get_blas_funcs("trsv", (dense_L,))
    return KktFactorization(
        n=sys.n, m=sys.m, permutation=perm, L=L, D=D,
        _dense_L=dense_L, _dinv=Dinv, _trsv=trsv,
    )


def solve_kkt_direct(fac: KktFactorization, rhs: np.ndarray) -> np.ndarray:
    """Solve the assembled KKT system using cached LDL^T factors."""
    rhs = np.asarray(rhs, dtype=np.float64)
    d = fac.n + fac.m
    if len(rhs) != d:
        raise ValueError(f"rhs has length {len(rhs)}, expected {d}")
    x = rhs[fac.permutation]
    x = fac._trsv(fac._dense_L, x, lower=1, trans=0, diag=1, overwrite_x=1)
    x *= fac._dinv
    x = fac._trsv(fac._dense_L, x, lower=1, trans=1, diag=1, overwrite_x=1)
    out = np.empty(d)
    out[fac.permutation] = x
    return out


def kkt_diag_precond(P: SparseMatrix, A: SparseMatrix) -> np.ndarray:
    """Inverse diagonal of I + P + A^T A (Jacobi preconditioner)."""
    diag = 1.0 + sym_diag(P)
    if A.nnz:
        diag += np.bincount(A.colind, weights=A.values**2, minlength=A.ncols)
    return 1.0 / diag


def solve_kkt_indirect(
    P: SparseMatrix,
    A: SparseMatrix,
    rhs: np.ndarray,
    tol: float,
    warm: np.ndarray,
    precond: np.ndarray | None = None,
    info: dict | None = None,
) -> np.ndarray:
    """Solve the KKT system by elimination and preconditioned CG.

    Eliminating the second block row reduces [[I+P, A^T], [A, -I]] (x, y)
    = (r1, r2) to the positive definite system
    (I + P + A^T A) x = r1 + A^T r2, with y = A x - r2 recovered exactly
    as computed. ``tol`` is relative: CG stops when the 2-norm residual of
    the reduced system drops below tol times the reduced rhs norm. ``warm``
    seeds the x iterate. The iteration cap is 10n; hitting it raises
    CgConvergenceError carrying the best iterate.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n, m = A.ncols, A.nrows
    rhs = np.asarray(rhs, dtype=np.float64)
    if len(rhs) != n + m:
        raise ValueError(f"rhs has length {len(rhs)}, expected {n + m}")
    r1, r2 = rhs[:n], rhs[n:]
    g = r1 + spmv(A, r2, transpose=True)
    if precond is None:
        precond = kkt_diag_precond(P, A)

    def apply_h(v):
        return v + spmv_sym_upper(P, v) + spmv(A, spmv(A, v), transpose=True)

    x = np.array(warm, dtype=np.float64, copy=True)
    if len(x) != n:
        raise ValueError(f"warm start has length {len(x)}, expected {n}")
    gnorm = np.linalg.norm(g)
    target = tol * gnorm
    resid = g - apply_h(x)
    iters = 0
    if np.linalg.norm(resid) > target:
        z = precond * resid
        p = z.copy()
        rz = resid @ z
        cap = max(10 * n, 10)
        while True:
            hp = apply_h(p)
            alpha = rz / (p @ hp)
            x += alpha * p
            resid -= alpha * hp
            iters += 1
            if np.linalg.norm(resid) <= target:
                break
            if iters >= cap:
                y = spmv(A, x) - r2
                raise CgConvergenceError(
                    f"CG did not reach tol={tol:.2e} in {cap} iterations",
                    best=np.concatenate([x, y]),
                )
            z = precond * resid
            rz_new = resid @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
    if info is not None:
        info["iterations"] = iters
    y = spmv(A, x) - r2
    return np.concatenate([x, y])
