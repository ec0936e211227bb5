"""Preconditioner family behind a single apply contract.

Every variant exposes ``apply(r) -> s`` realizing a symmetric positive
definite operator, plus construction metadata.  Variants: identity
("none"), diagonal scaling, zero-fill incomplete Cholesky, a classical
factorized sparse approximate inverse (lower-triangular factor), and the
learned sparse approximate inverse factor produced by the graph network.
"""

from __future__ import annotations

import time
from abc import ABC, abstractmethod

import numpy as np

from . import dense
from .sparse import SparseMatrix, spmv, spmv_transpose

__all__ = [
    "Preconditioner",
    "IdentityPreconditioner",
    "JacobiPreconditioner",
    "IC0Preconditioner",
    "FsaiPreconditioner",
    "LearnedSpaiPreconditioner",
    "build_jacobi",
    "build_ic0",
    "build_fsai",
    "build_learned_spai",
    "build_identity",
    "PRECONDITIONER_NAMES",
]

PRECONDITIONER_NAMES = ("none", "diag", "ic0", "fsai", "learned")


class PreconditionerBreakdownError(RuntimeError):
    pass


class Preconditioner(ABC):
    """SPD linear operator approximating the inverse of the system matrix."""

    variant: str = "abstract"

    def __init__(self, n: int, t_construct_ns: int = 0):
        self.n = n
        self.t_construct_ns = t_construct_ns

    @abstractmethod
    def apply(self, r: np.ndarray) -> np.ndarray:
        """s = M^{-1} r."""

    def _check_dim(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        if len(r) != self.n:
            raise ValueError(f"dimension mismatch: operator is {self.n}, vector is {len(r)}")
        return r


class IdentityPreconditioner(Preconditioner):
    variant = "none"

    def apply(self, r):
        return self._check_dim(r).copy()


class JacobiPreconditioner(Preconditioner):
    """Division by the diagonal of the system matrix."""

    variant = "diag"

    def __init__(self, inv_diag: np.ndarray, t_construct_ns: int = 0):
        super().__init__(len(inv_diag), t_construct_ns)
        self.inv_diag = inv_diag

    def apply(self, r):
        return self._check_dim(r) * self.inv_diag


class IC0Preconditioner(Preconditioner):
    """Zero-fill incomplete Cholesky; applies two triangular solves.

    ``sigma_shift`` records the diagonal shift that was needed to finish
    the factorization (0.0 when the plain factorization succeeded).
    """

    variant = "ic0"

    def __init__(self, lower: SparseMatrix, sigma_shift: float, t_construct_ns: int = 0):
        super().__init__(lower.n_rows, t_construct_ns)
        self.lower = lower
        self.sigma_shift = sigma_shift
        self._upper = lower.transpose()

    def apply(self, r):
        r = self._check_dim(r)
        y = _solve_lower_csr(self.lower, r)
        return _solve_upper_csr(self._upper, y)


class FsaiPreconditioner(Preconditioner):
    """Classical factorized approximate inverse with a triangular factor.

    The lower-triangular factor ``g_lower`` satisfies G A G^T ~= I, so the
    operator is G^T (G r).  ``fallback_rows`` counts rows whose local
    system was too ill-conditioned and fell back to diagonal scaling.
    """

    variant = "fsai"

    def __init__(self, g_lower: SparseMatrix, fallback_rows: int, t_construct_ns: int = 0):
        super().__init__(g_lower.n_rows, t_construct_ns)
        self.g_lower = g_lower
        self.fallback_rows = fallback_rows

    def apply(self, r):
        r = self._check_dim(r)
        return spmv_transpose(self.g_lower, spmv(self.g_lower, r))


class LearnedSpaiPreconditioner(Preconditioner):
    """Factor produced by the graph network: M^{-1} = G G^T + eps I.

    The factor shares the system matrix pattern and is not constrained
    triangular.  Application is exactly two sparse matrix-vector
    products and one scaled vector addition.

    epsilon = 0 is accepted for diagnostic use (exact-inverse factors);
    G G^T must then be full rank for the operator to stay SPD.
    """

    variant = "learned"

    def __init__(self, factor: SparseMatrix, epsilon: float, t_construct_ns: int = 0):
        if epsilon < 0.0:
            raise ValueError("epsilon must be nonnegative")
        super().__init__(factor.n_rows, t_construct_ns)
        self.factor = factor
        self.epsilon = epsilon

    def apply(self, r):
        r = self._check_dim(r)
        return spmv(self.factor, spmv_transpose(self.factor, r)) + self.epsilon * r


def build_identity(A: SparseMatrix) -> IdentityPreconditioner:
    return IdentityPreconditioner(A.n_rows)


def build_jacobi(A: SparseMatrix) -> JacobiPreconditioner:
    """Diagonal preconditioner; requires a present, positive diagonal."""
    t0 = time.perf_counter_ns()
    d = A.diagonal()
    rows = A.row_expand()
    present = np.zeros(A.n_rows, dtype=bool)
    present[rows[rows == A.col_indices]] = True
    if not present.all():
        raise ValueError(f"missing diagonal entry at row {int(np.flatnonzero(~present)[0])}")
    if np.any(d <= 0.0):
        raise ValueError(f"nonpositive diagonal entry at row {int(np.flatnonzero(d <= 0.0)[0])}")
    inv = 1.0 / d
    return JacobiPreconditioner(inv, t_construct_ns=time.perf_counter_ns() - t0)


def _lower_triangle(A: SparseMatrix) -> SparseMatrix:
    rows = A.row_expand()
    keep = A.col_indices <= rows
    offsets = np.zeros(A.n_rows + 1, dtype=np.int64)
    np.add.at(offsets, rows[keep] + 1, 1)
    np.cumsum(offsets, out=offsets)
    return SparseMatrix(A.n_rows, A.n_cols, offsets, A.col_indices[keep], A.values[keep])


def _ic0_factor(lower: SparseMatrix) -> SparseMatrix:
    """Incomplete Cholesky restricted to the given lower pattern.

    Raises PreconditionerBreakdownError on a nonpositive pivot.
    """
    n = lower.n_rows
    offs, cols, a = lower.row_offsets, lower.col_indices, lower.values
    vals = np.zeros_like(a)
    diag_idx = np.empty(n, dtype=np.int64)
    for i in range(n):
        lo, hi = offs[i], offs[i + 1]
        if hi == lo or cols[hi - 1] != i:
            raise PreconditionerBreakdownError(f"missing diagonal entry in row {i}")
        diag_idx[i] = hi - 1
        for idx in range(lo, hi):
            j = cols[idx]
            s = a[idx]
            # sparse dot of rows i and j over columns < j
            pi, pj = lo, offs[j]
            stop_i, stop_j = idx, diag_idx[j]
            while pi < stop_i and pj < stop_j:
                ci, cj = cols[pi], cols[pj]
                if ci == cj:
                    s -= vals[pi] * vals[pj]
                    pi += 1
                    pj += 1
                elif ci < cj:
                    pi += 1
                else:
                    pj += 1
            if j < i:
                vals[idx] = s / vals[diag_idx[j]]
            else:
                if s <= 0.0 or not np.isfinite(s):
                    raise PreconditionerBreakdownError(f"nonpositive pivot {s:.3e} at row {i}")
                vals[idx] = np.sqrt(s)
    return lower.with_values(vals)


def build_ic0(A: SparseMatrix) -> IC0Preconditioner:
    """IC(0) with diagonal-shift recovery.

    On pivot breakdown the factorization restarts from A + sigma*diag(A)
    with sigma stepping through 1e-3, 1e-2, ..., 10.
    """
    t0 = time.perf_counter_ns()
    lower = _lower_triangle(A)
    shifts = [0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0]
    last_err = None
    for sigma in shifts:
        shifted = lower
        if sigma > 0.0:
            rows = lower.row_expand()
            on_diag = rows == lower.col_indices
            vals = lower.values.copy()
            vals[on_diag] *= 1.0 + sigma
            shifted = lower.with_values(vals)
        try:
            factor = _ic0_factor(shifted)
        except PreconditionerBreakdownError as exc:
            last_err = exc
            continue
        return IC0Preconditioner(factor, sigma, t_construct_ns=time.perf_counter_ns() - t0)
    raise PreconditionerBreakdownError(f"factorization failed even with shift 10: {last_err}")


def _solve_lower_csr(L: SparseMatrix, b: np.ndarray) -> np.ndarray:
    """Forward substitution; each row's last stored entry is its diagonal."""
    y = np.zeros_like(b)
    offs, cols, vals = L.row_offsets, L.col_indices, L.values
    for i in range(L.n_rows):
        lo, hi = offs[i], offs[i + 1]
        y[i] = (b[i] - vals[lo : hi - 1] @ y[cols[lo : hi - 1]]) / vals[hi - 1]
    return y


def _solve_upper_csr(U: SparseMatrix, b: np.ndarray) -> np.ndarray:
    """Back substitution; each row's first stored entry is its diagonal."""
    x = np.zeros_like(b)
    offs, cols, vals = U.row_offsets, U.col_indices, U.values
    for i in range(U.n_rows - 1, -1, -1):
        lo, hi = offs[i], offs[i + 1]
        x[i] = (b[i] - vals[lo + 1 : hi] @ x[cols[lo + 1 : hi]]) / vals[lo]
    return x


def build_fsai(A: SparseMatrix) -> FsaiPreconditioner:
    """Factorized sparse approximate inverse on the lower pattern of A.

    Row i solves the dense local system A[P_i, P_i] g = e_last over the
    row's pattern set P_i = {j <= i : (i, j) stored}, then rescales so the
    preconditioned diagonal is one.  Ill-conditioned local systems fall
    back to the diagonal entry.
    """
    t0 = time.perf_counter_ns()
    lower = _lower_triangle(A)
    offs, cols = lower.row_offsets, lower.col_indices
    vals = np.zeros(lower.nnz)
    # column-position lookup per row of A for submatrix gathering
    diag = A.diagonal()
    if np.any(diag <= 0.0):
        raise ValueError("FSAI requires a positive diagonal")
    fallbacks = 0
    for i in range(lower.n_rows):
        lo, hi = offs[i], offs[i + 1]
        if hi == lo or cols[hi - 1] != i:
            raise ValueError(f"missing diagonal entry in row {i}")
        pat = cols[lo:hi]
        m = len(pat)
        local = np.zeros((m, m))
        for a_idx, row in enumerate(pat):
            r_lo, r_hi = A.row_offsets[row], A.row_offsets[row + 1]
            r_cols = A.col_indices[r_lo:r_hi]
            pos = np.searchsorted(r_cols, pat)
            pos_ok = (pos < len(r_cols)) & (r_cols[np.minimum(pos, len(r_cols) - 1)] == pat)
            local[a_idx, pos_ok] = A.values[r_lo:r_hi][pos[pos_ok]]
        rhs = np.zeros(m)
        rhs[-1] = 1.0
        try:
            g = dense.solve_spd(local, rhs)
            pivot = g[-1]
            if pivot <= 0.0 or not np.isfinite(pivot):
                raise dense.NotPositiveDefiniteError(m - 1, float(pivot))
            vals[lo:hi] = g / np.sqrt(pivot)
        except dense.NotPositiveDefiniteError:
            fallbacks += 1
            vals[lo:hi] = 0.0
            vals[hi - 1] = 1.0 / np.sqrt(diag[i])
    factor = lower.with_values(vals)
    return FsaiPreconditioner(factor, fallbacks, t_construct_ns=time.perf_counter_ns() - t0)


def build_learned_spai(factor: SparseMatrix, epsilon: float) -> LearnedSpaiPreconditioner:
    t0 = time.perf_counter_ns()
    pre = LearnedSpaiPreconditioner(factor, epsilon)
    pre.t_construct_ns = time.perf_counter_ns() - t0
    return pre
