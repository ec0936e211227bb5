"""Small dense kernels: Cholesky, triangular solves, Jacobi eigensolver.

These are oracles and evaluators for desk-scale diagnostics; the solver
path never densifies the system matrix.  Dense matrices are plain
row-major float64 numpy arrays.
"""

from __future__ import annotations

import numpy as np

from .sparse import SparseMatrix

__all__ = [
    "cholesky",
    "solve_lower",
    "solve_upper",
    "solve_spd",
    "symmetric_eigen",
    "spectral_norm",
    "dense_from_sparse",
    "DENSE_GUARD",
]

DENSE_GUARD = 4000

_JACOBI_MAX_SWEEPS = 50


class NotPositiveDefiniteError(ValueError):
    """Cholesky pivot failure; carries the failing pivot index."""

    def __init__(self, index: int, pivot: float):
        super().__init__(f"matrix is not positive definite: pivot {pivot:.3e} at index {index}")
        self.index = index
        self.pivot = pivot


class EigenConvergenceError(RuntimeError):
    def __init__(self, residual: float, sweeps: int):
        super().__init__(
            f"Jacobi sweeps did not converge: off-diagonal residual {residual:.3e} after {sweeps} sweeps"
        )
        self.residual = residual


def _require_symmetric(A: np.ndarray, tol: float) -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = np.max(np.abs(A)) if A.size else 0.0
    gap = np.max(np.abs(A - A.T)) if A.size else 0.0
    if scale > 0.0 and gap > tol * scale:
        raise ValueError(f"matrix is not symmetric: max |A - A^T| = {gap:.3e}")


def cholesky(A: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L^T = A for symmetric positive definite A."""
    A = np.asarray(A, dtype=np.float64)
    _require_symmetric(A, 1e-12)
    n = A.shape[0]
    L = np.zeros_like(A)
    for j in range(n):
        pivot = A[j, j] - L[j, :j] @ L[j, :j]
        if pivot <= 0.0 or not np.isfinite(pivot):
            raise NotPositiveDefiniteError(j, float(pivot))
        L[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            L[j + 1 :, j] = (A[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def solve_lower(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Forward substitution for lower-triangular L."""
    n = len(b)
    y = np.zeros(n)
    for i in range(n):
        y[i] = (b[i] - L[i, :i] @ y[:i]) / L[i, i]
    return y


def solve_upper(U: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Back substitution for upper-triangular U."""
    n = len(b)
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - U[i, i + 1 :] @ x[i + 1 :]) / U[i, i]
    return x


def solve_spd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Direct SPD solve via Cholesky; the solver-correctness oracle."""
    L = cholesky(A)
    return solve_upper(L.T, solve_lower(L, b))


def symmetric_eigen(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues sorted ascending and the matching eigenvector
    matrix (columns).  Rotations sweep the upper triangle until the
    largest off-diagonal entry falls below 1e-12 * ||A||_F.
    """
    A = np.asarray(A, dtype=np.float64)
    _require_symmetric(A, 1e-10)
    n = A.shape[0]
    B = 0.5 * (A + A.T)
    V = np.eye(n)
    if n == 1:
        return B.diagonal().copy(), V
    fro = np.linalg.norm(B, "fro")
    if fro == 0.0:
        return np.zeros(n), V
    tol = 1e-12 * fro
    converged = False
    for sweep in range(_JACOBI_MAX_SWEEPS):
        off = np.abs(B - np.diag(B.diagonal()))
        if off.max() <= tol:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = B[p, q]
                if abs(apq) <= 1e-2 * tol / n:
                    continue
                # stable rotation angle (Rutishauser)
                theta = 0.5 * (B[q, q] - B[p, p]) / apq
                t = np.sign(theta) / (abs(theta) + np.sqrt(1.0 + theta * theta))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rot_p = c * B[:, p] - s * B[:, q]
                rot_q = s * B[:, p] + c * B[:, q]
                B[:, p], B[:, q] = rot_p, rot_q
                rot_p = c * B[p, :] - s * B[q, :]
                rot_q = s * B[p, :] + c * B[q, :]
                B[p, :], B[q, :] = rot_p, rot_q
                B[p, q] = 0.0
                B[q, p] = 0.0
                rot_p = c * V[:, p] - s * V[:, q]
                rot_q = s * V[:, p] + c * V[:, q]
                V[:, p], V[:, q] = rot_p, rot_q
    if not converged:
        off = np.abs(B - np.diag(B.diagonal()))
        if off.max() > tol:
            raise EigenConvergenceError(float(off.max()), _JACOBI_MAX_SWEEPS)
    w = B.diagonal().copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def spectral_norm(E: np.ndarray) -> float:
    """Largest singular value, computed as sqrt(lambda_max(E^T E))."""
    E = np.asarray(E, dtype=np.float64)
    if E.size == 0 or not E.any():
        return 0.0
    gram = E.T @ E
    w, _ = symmetric_eigen(0.5 * (gram + gram.T))
    return float(np.sqrt(max(w[-1], 0.0)))


def dense_from_sparse(A: SparseMatrix, guard: int = DENSE_GUARD) -> np.ndarray:
    """Densify a sparse matrix, refusing sizes beyond the desk-scale guard."""
    if A.n_rows > guard or A.n_cols > guard:
        raise ValueError(f"matrix {A.n_rows}x{A.n_cols} exceeds dense guard {guard}")
    out = np.zeros((A.n_rows, A.n_cols))
    out[A.row_expand(), A.col_indices] = A.values
    return out
