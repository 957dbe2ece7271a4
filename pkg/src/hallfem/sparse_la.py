"""Sparse storage helpers and linear solvers.

Matrices are ``scipy.sparse.csr_matrix`` with sorted, unique column indices.
Three solver paths are available:

``dense``   LU with partial pivoting on the densified matrix (small systems)
``direct``  sparse LU (SuperLU) on a METIS nested-dissection ordering
``gmres``   restarted GMRES with a zero-fill incomplete LU preconditioner

``auto`` picks ``dense`` below :data:`DENSE_LIMIT` unknowns and ``direct``
above.
"""

from __future__ import annotations

import hashlib
import logging
import warnings
from dataclasses import dataclass

import numba
import numpy as np
import pymetis
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DENSE_LIMIT = 3000


class SolverError(RuntimeError):
    pass


class NonConvergenceError(SolverError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class SingularMatrixError(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    method: str = "auto"  # auto | dense | direct | gmres
    tol: float = 1e-10
    maxiter: int = 2000
    restart: int = 200
    preconditioner: str = "ilu0"  # none | ilu0

    def __post_init__(self):
        if not 0.0 < self.tol < 1.0:
            raise ValueError(f"tolerance must lie in (0, 1), got {self.tol}")
        if self.restart < 1:
            raise ValueError("restart length must be at least 1")
        if self.method not in ("auto", "dense", "direct", "gmres"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.preconditioner not in ("none", "ilu0"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    residual: float
    method: str


def from_triplets(rows, cols, vals, shape) -> sp.csr_matrix:
    """CSR matrix from (i, j, a_ij) triplets; duplicates are summed."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    m, n = shape
    if rows.size and (rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n):
        raise IndexError("triplet index out of range")
    A = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def write_matrix_market(path, A) -> None:
    from scipy.io import mmwrite

    mmwrite(str(path), sp.coo_matrix(A))


def relative_residual(A, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return r / nb if nb > 0 else r


# ------------------------------------------------------------------ ILU(0)


@numba.njit(cache=True)
def _ilu0_factor(indptr, indices, data, shift):
    n = len(indptr) - 1
    a = data.copy()
    diag = np.empty(n, dtype=np.int64)
    nshift = 0
    for i in range(n):
        diag[i] = -1
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] == i:
                diag[i] = p
    pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            pos[indices[p]] = p
        for p in range(indptr[i], indptr[i + 1]):
            k = indices[p]
            if k >= i:
                break
            piv = a[diag[k]]
            a[p] /= piv
            lik = a[p]
            for q in range(diag[k] + 1, indptr[k + 1]):
                j = indices[q]
                if pos[j] >= 0:
                    a[pos[j]] -= lik * a[q]
        if diag[i] < 0:
            raise ValueError("structurally missing diagonal")
        if abs(a[diag[i]]) < shift:
            a[diag[i]] = shift if a[diag[i]] >= 0 else -shift
            nshift += 1
        for p in range(indptr[i], indptr[i + 1]):
            pos[indices[p]] = -1
    return a, diag, nshift


@numba.njit(cache=True)
def _ilu0_apply(indptr, indices, a, diag, b):
    n = len(b)
    y = b.copy()
    for i in range(n):
        s = y[i]
        for p in range(indptr[i], diag[i]):
            s -= a[p] * y[indices[p]]
        y[i] = s
    for i in range(n - 1, -1, -1):
        s = y[i]
        for p in range(diag[i] + 1, indptr[i + 1]):
            s -= a[p] * y[indices[p]]
        y[i] = s / a[diag[i]]
    return y


class ILU0:
    """Incomplete LU with the sparsity pattern of A, no pivoting.

    Structurally zero diagonals are inserted explicitly; pivots smaller than
    ``1e-12 * ||A||_inf`` are replaced by that value and counted in ``shifts``.
    """

    def __init__(self, A):
        C = sp.coo_matrix(A, dtype=float)
        n = C.shape[0]
        idx = np.arange(n)
        # explicit zero diagonal entries survive the COO -> CSR conversion
        A = sp.coo_matrix(
            (np.concatenate([C.data, np.zeros(n)]), (np.concatenate([C.row, idx]), np.concatenate([C.col, idx]))),
            shape=C.shape,
        ).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        norm = abs(A).sum(axis=1).max()
        self.shift_value = 1e-12 * float(norm) if norm > 0 else 1e-12
        self.indptr = A.indptr.astype(np.int64)
        self.indices = A.indices.astype(np.int64)
        self.factors, self.diag, self.shifts = _ilu0_factor(
            self.indptr, self.indices, A.data, self.shift_value
        )
        if self.shifts:
            log.info("ILU0: %d diagonal shifts of %.3e", self.shifts, self.shift_value)
        self.shape = A.shape

    def solve(self, b):
        return _ilu0_apply(self.indptr, self.indices, self.factors, self.diag, np.asarray(b, float))

    def as_operator(self):
        return spla.LinearOperator(self.shape, matvec=self.solve, dtype=float)


# ------------------------------------------------------------------ solve


def _dense_solve(A, b):
    Ad = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    if not np.all(np.isfinite(Ad)):
        raise SingularMatrixError("matrix has non-finite entries")
    with warnings.catch_warnings():
        # a zero pivot is reported below as SingularMatrixError
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(Ad, check_finite=False)
    d = np.abs(np.diag(lu))
    scale = np.abs(Ad).max() if Ad.size else 0.0
    if scale == 0.0 or d.min() <= 1e-14 * scale:
        raise SingularMatrixError("dense LU hit a zero pivot")
    return sla.lu_solve((lu, piv), b, check_finite=False)


_ORDER_CACHE: dict = {}
_ORDER_CACHE_SIZE = 8


def nested_dissection_order(A) -> np.ndarray:
    """Fill-reducing symmetric permutation of the pattern of ``A + A^T``.

    Orderings are cached by sparsity pattern, since a time loop refactors
    matrices with identical structure.
    """
    A = sp.csr_matrix(A, copy=True)
    A.sum_duplicates()  # sorted indices, so equal patterns hash equally
    key = (A.shape, A.nnz, hashlib.blake2b(A.indptr.tobytes() + A.indices.tobytes()).hexdigest())
    if key in _ORDER_CACHE:
        return _ORDER_CACHE[key]
    S = (abs(A) + abs(A).T).tocsr()
    S.setdiag(0)
    S.eliminate_zeros()
    if S.nnz == 0:
        perm = np.arange(A.shape[0])
    else:
        perm, _ = pymetis.nested_dissection(pymetis.CSRAdjacency(S.indptr, S.indices))
        perm = np.asarray(perm, dtype=np.int64)
    if len(_ORDER_CACHE) >= _ORDER_CACHE_SIZE:
        _ORDER_CACHE.pop(next(iter(_ORDER_CACHE)))
    _ORDER_CACHE[key] = perm
    return perm


def _direct_solve(A, b, tol):
    """Sparse LU.  First attempt: static nested-dissection pivots without
    row interchanges, which keeps the fill close to that of a symmetric
    factorisation.  If a pivot vanishes or the residual is poor the matrix is
    refactored with SuperLU's own column ordering and partial pivoting."""
    A = sp.csr_matrix(A)
    perm = nested_dissection_order(A)
    Ap = sp.csc_matrix(A[perm][:, perm])
    try:
        lu = spla.splu(Ap, permc_spec="NATURAL", diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
        y = lu.solve(b[perm])
        # one step of iterative refinement
        y += lu.solve(b[perm] - Ap @ y)
        x = np.empty_like(y)
        x[perm] = y
        if np.all(np.isfinite(x)) and relative_residual(A, x, b) <= max(tol, 1e-12):
            return x
        log.info("static-pivot LU inaccurate; refactoring with partial pivoting")
    except RuntimeError:
        log.info("static-pivot LU hit a zero pivot; refactoring with partial pivoting")
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise SingularMatrixError(str(exc)) from exc
    x = lu.solve(b)
    return x + lu.solve(b - A @ x)


def _gmres_solve(A, b, cfg):
    M = ILU0(A).as_operator() if cfg.preconditioner == "ilu0" else None
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.gmres(
        A,
        b,
        rtol=cfg.tol,
        atol=0.0,
        restart=cfg.restart,
        maxiter=max(1, cfg.maxiter // cfg.restart + 1),
        M=M,
        callback=cb,
        callback_type="pr_norm",
    )
    res = relative_residual(A, x, b)
    if info != 0 or not np.isfinite(res) or res > 10 * cfg.tol:
        raise NonConvergenceError(
            f"GMRES did not converge (info={info}, residual={res:.3e})", res
        )
    return x, count[0], res


def solve(A, b, cfg: SolverConfig | None = None) -> SolveResult:
    """Solve ``A x = b``; returns the solution with iteration/residual metadata."""
    cfg = cfg or SolverConfig()
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if b.shape[0] != n:
        raise ValueError("right-hand side length does not match the matrix")
    method = cfg.method
    if method == "auto":
        method = "dense" if n < DENSE_LIMIT else "direct"
    if n == 0:
        return SolveResult(np.zeros(0), 0, 0.0, method)
    if method == "dense":
        x = _dense_solve(A, b)
        its = 1
    elif method == "direct":
        x = _direct_solve(A, b, cfg.tol)
        its = 1
    else:
        x, its, _ = _gmres_solve(A, b, cfg)
    res = relative_residual(A, x, b)
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("solution contains non-finite values")
    return SolveResult(x, its, res, method)
