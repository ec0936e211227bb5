"""CSR sparse matrix storage, kernels, and Matrix Market I/O.

The single canonical sparse format in this package is CSR.  Explicitly
stored zeros are legal and pattern-significant: the sparsity pattern
doubles as the graph on which features and learned factors live, so an
entry that happens to be numerically zero is still an edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SparseMatrix",
    "SparsityPattern",
    "spmv",
    "spmv_transpose",
    "mean_abs_nonzero_norm",
    "read_matrix_market",
    "write_matrix_market",
]


def _validate_structure(n_rows, n_cols, row_offsets, col_indices):
    if row_offsets.ndim != 1 or len(row_offsets) != n_rows + 1:
        raise ValueError("row_offsets must have length n_rows + 1")
    if row_offsets[0] != 0:
        raise ValueError("row_offsets[0] must be 0")
    if row_offsets[-1] != len(col_indices):
        raise ValueError("row_offsets[-1] must equal nnz")
    if np.any(np.diff(row_offsets) < 0):
        raise ValueError("row_offsets must be nondecreasing")
    if len(col_indices) > 0:
        if col_indices.min() < 0 or col_indices.max() >= n_cols:
            raise ValueError("column index out of range")
        # strictly increasing within each row
        same_row = np.repeat(np.arange(n_rows), np.diff(row_offsets))
        interior = np.flatnonzero(same_row[1:] == same_row[:-1])
        if np.any(col_indices[interior + 1] <= col_indices[interior]):
            raise ValueError("col_indices must be strictly increasing within each row")


@dataclass(frozen=True)
class SparsityPattern:
    """CSR structure without values: the edge set of the matrix graph."""

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", np.ascontiguousarray(self.row_offsets, dtype=np.int64))
        object.__setattr__(self, "col_indices", np.ascontiguousarray(self.col_indices, dtype=np.int64))
        _validate_structure(self.n_rows, self.n_cols, self.row_offsets, self.col_indices)

    @property
    def nnz(self) -> int:
        return len(self.col_indices)

    def row_expand(self) -> np.ndarray:
        """Row index of every stored entry, in storage order."""
        return np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.row_offsets))

    def is_symmetric(self) -> bool:
        """Whether (i, j) stored implies (j, i) stored.  Verified, never assumed."""
        if self.n_rows != self.n_cols:
            return False
        rows = self.row_expand()
        fwd = np.lexsort((self.col_indices, rows))
        bwd = np.lexsort((rows, self.col_indices))
        return bool(
            np.array_equal(rows[fwd], self.col_indices[bwd])
            and np.array_equal(self.col_indices[fwd], rows[bwd])
        )


@dataclass(frozen=True)
class SparseMatrix:
    """Immutable CSR matrix with 64-bit float values.

    Invariants: row_offsets nondecreasing with row_offsets[0] == 0 and
    row_offsets[-1] == nnz; column indices strictly increasing within a
    row.  Stored entries may be numerically zero.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", np.ascontiguousarray(self.row_offsets, dtype=np.int64))
        object.__setattr__(self, "col_indices", np.ascontiguousarray(self.col_indices, dtype=np.int64))
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float64))
        _validate_structure(self.n_rows, self.n_cols, self.row_offsets, self.col_indices)
        if len(self.values) != len(self.col_indices):
            raise ValueError("values and col_indices must have equal length")

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def pattern(self) -> SparsityPattern:
        return SparsityPattern(self.n_rows, self.n_cols, self.row_offsets, self.col_indices)

    def row_expand(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.row_offsets))

    def with_values(self, values: np.ndarray) -> "SparseMatrix":
        """Same pattern, new values (positional)."""
        return SparseMatrix(self.n_rows, self.n_cols, self.row_offsets, self.col_indices, values)

    def diagonal(self) -> np.ndarray:
        """Dense diagonal; absent diagonal entries read as 0."""
        if self.n_rows != self.n_cols:
            raise ValueError("diagonal of a non-square matrix")
        d = np.zeros(self.n_rows)
        rows = self.row_expand()
        mask = rows == self.col_indices
        d[rows[mask]] = self.values[mask]
        return d

    def transpose(self) -> "SparseMatrix":
        rows = self.row_expand()
        order = np.lexsort((rows, self.col_indices))
        new_rows = self.col_indices[order]
        offsets = np.zeros(self.n_cols + 1, dtype=np.int64)
        np.add.at(offsets, new_rows + 1, 1)
        np.cumsum(offsets, out=offsets)
        return SparseMatrix(self.n_cols, self.n_rows, offsets, rows[order], self.values[order])

    @staticmethod
    def from_coo(n_rows: int, n_cols: int, rows, cols, vals) -> "SparseMatrix":
        """Build from coordinate triplets.  Duplicates are an error, not summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (len(rows) == len(cols) == len(vals)):
            raise ValueError("coordinate arrays must have equal length")
        if len(rows) > 0 and (rows.min() < 0 or rows.max() >= n_rows):
            raise ValueError("row index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows) > 1:
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if np.any(dup):
                k = int(np.flatnonzero(dup)[0])
                raise ValueError(f"duplicate entry at ({rows[k]}, {cols[k]})")
        offsets = np.zeros(n_rows + 1, dtype=np.int64)
        np.add.at(offsets, rows + 1, 1)
        np.cumsum(offsets, out=offsets)
        return SparseMatrix(n_rows, n_cols, offsets, cols, vals)

    @staticmethod
    def from_dense(dense: np.ndarray, keep=None) -> "SparseMatrix":
        """Sparsify a dense array; `keep` is an optional boolean pattern mask."""
        dense = np.asarray(dense, dtype=np.float64)
        if keep is None:
            keep = dense != 0.0
        rows, cols = np.nonzero(keep)
        return SparseMatrix.from_coo(dense.shape[0], dense.shape[1], rows, cols, dense[rows, cols])

    @staticmethod
    def identity(n: int) -> "SparseMatrix":
        idx = np.arange(n, dtype=np.int64)
        return SparseMatrix(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))


def _segment_sums(contrib: np.ndarray, row_offsets: np.ndarray) -> np.ndarray:
    """Per-row sums of entrywise contributions, left-to-right within a row."""
    n = len(row_offsets) - 1
    out = np.zeros((n,) + contrib.shape[1:], dtype=np.float64)
    starts = row_offsets[:-1]
    nonempty = row_offsets[1:] > starts
    if np.any(nonempty):
        out[nonempty] = np.add.reduceat(contrib, starts[nonempty], axis=0)
    return out


def spmv(A: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """y = A x with a fixed left-to-right accumulation order per row."""
    x = np.asarray(x, dtype=np.float64)
    if A.n_cols != len(x):
        raise ValueError(f"dimension mismatch: matrix has {A.n_cols} columns, vector has {len(x)}")
    return _segment_sums(A.values * x[A.col_indices], A.row_offsets)


def spmv_transpose(A: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """y = A^T x, accumulated in storage order of A."""
    x = np.asarray(x, dtype=np.float64)
    if A.n_rows != len(x):
        raise ValueError(f"dimension mismatch: matrix has {A.n_rows} rows, vector has {len(x)}")
    y = np.zeros(A.n_cols)
    np.add.at(y, A.col_indices, A.values * x[A.row_expand()])
    return y


def mean_abs_nonzero_norm(A: SparseMatrix) -> float:
    """Mean absolute value over stored entries (explicit zeros included).

    Dimension-agnostic matrix scale used to normalize edge features and
    the training loss; exact summation keeps it positively homogeneous
    to within an ulp.
    """
    if A.nnz == 0:
        raise ValueError("norm of a matrix with no stored entries")
    return math.fsum(np.abs(A.values)) / A.nnz


def read_matrix_market(path) -> SparseMatrix:
    """Read a real coordinate Matrix Market file.

    Symmetric storage is expanded to the full pattern.  Duplicate
    entries are rejected rather than summed.
    """
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline()
        parts = header.strip().split()
        if (
            len(parts) != 5
            or parts[0] != "%%MatrixMarket"
            or parts[1].lower() != "matrix"
            or parts[2].lower() != "coordinate"
            or parts[3].lower() != "real"
            or parts[4].lower() not in ("general", "symmetric")
        ):
            raise ValueError(f"malformed Matrix Market header: {header.strip()!r}")
        symmetric = parts[4].lower() == "symmetric"
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        try:
            n_rows, n_cols, nnz = (int(t) for t in line.split())
        except Exception as exc:
            raise ValueError(f"malformed size line: {line.strip()!r}") from exc
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        for k in range(nnz):
            fields = fh.readline().split()
            if len(fields) != 3:
                raise ValueError(f"malformed entry line {k + 1}")
            rows[k] = int(fields[0]) - 1
            cols[k] = int(fields[1]) - 1
            vals[k] = float(fields[2])
    if nnz > 0 and (rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols):
        raise ValueError("entry index out of range")
    if symmetric:
        if n_rows != n_cols:
            raise ValueError("symmetric header on a non-square matrix")
        if np.any(cols > rows):
            raise ValueError("symmetric file stores an upper-triangular entry")
        off = cols < rows
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    return SparseMatrix.from_coo(n_rows, n_cols, rows, cols, vals)


def write_matrix_market(A: SparseMatrix, path) -> None:
    """Write in general coordinate format, 17 significant digits."""
    rows = A.row_expand()
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.n_rows} {A.n_cols} {A.nnz}\n")
        for r, c, v in zip(rows, A.col_indices, A.values):
            fh.write(f"{r + 1} {c + 1} {v:.16e}\n")
