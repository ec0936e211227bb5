"""Preconditioned conjugate gradient solver with cost instrumentation.

The iteration follows the classical preconditioned CG recurrence with a
periodic residual refresh: every ``residual_refresh_period`` iterations
the running residual is replaced by a freshly computed b - Ax before
the preconditioner application and direction update, which then proceed
as on every other iteration.

Two termination criteria are supported.  The default stops when the
true relative residual ||b - Ax|| / ||b|| drops below ``rtol`` (checked
against the running residual each iteration and re-verified with a
fresh matrix-vector product before the converged flag is set).  The
alternative is the classical delta test delta_new > rtol^2 * delta_0 in
the preconditioner inner product.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .precond import Preconditioner
from .sparse import SparseMatrix, mean_abs_nonzero_norm, spmv

__all__ = [
    "SolveConfig",
    "SolveReport",
    "SymmetryDiagnostic",
    "NotSpdError",
    "pcg_solve",
    "verify_spd_symmetric",
]


class NotSpdError(RuntimeError):
    """Raised when the iteration detects an indefinite matrix or preconditioner."""

    def __init__(self, message: str, iteration: int, value: float):
        super().__init__(f"{message} (iteration {iteration}, value {value:.6e})")
        self.iteration = iteration
        self.value = value


@dataclass(frozen=True)
class SolveConfig:
    """Solver knobs.  ``max_iters`` defaults to 20 * n when left as None."""

    rtol: float = 1e-8
    max_iters: int | None = None
    residual_refresh_period: int = 50
    track_history: bool = True
    termination: str = "true_residual"  # or "delta"

    def __post_init__(self):
        if self.rtol <= 0.0:
            raise ValueError("rtol must be positive")
        if self.residual_refresh_period < 1:
            raise ValueError("residual refresh period must be at least 1")
        if self.max_iters is not None and self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.termination not in ("true_residual", "delta"):
            raise ValueError(f"unknown termination criterion {self.termination!r}")


@dataclass
class SolveReport:
    """Outcome of one solve, with the construction/application/iteration
    cost decomposition (durations in nanoseconds)."""

    x: np.ndarray
    k: int
    converged: bool
    t_construct_ns: int
    t_apply_total_ns: int
    t_cg_total_ns: int
    residual_history: list[float] | None = field(default=None)

    def to_json(self) -> str:
        payload = {
            "x": [float(v) for v in self.x],
            "k": self.k,
            "converged": self.converged,
            "t_construct_ns": int(self.t_construct_ns),
            "t_apply_total_ns": int(self.t_apply_total_ns),
            "t_cg_total_ns": int(self.t_cg_total_ns),
            "residual_history": None
            if self.residual_history is None
            else [float(v) for v in self.residual_history],
        }
        return json.dumps(payload)


@dataclass(frozen=True)
class SymmetryDiagnostic:
    pattern_symmetric: bool
    max_abs_asymmetry: float
    value_tol: float
    is_symmetric: bool


def verify_spd_symmetric(A: SparseMatrix) -> SymmetryDiagnostic:
    """Check pattern symmetry and |A_ij - A_ji| < 1e-12 * ||A||.

    Positive definiteness is not certified here; it surfaces as a
    NotSpdError inside pcg_solve when violated.
    """
    if A.n_rows != A.n_cols:
        return SymmetryDiagnostic(False, float("inf"), 0.0, False)
    pattern_ok = A.pattern.is_symmetric()
    # merge entries of A and -A^T; surviving sums are the asymmetries
    At = A.transpose()
    rows = np.concatenate([A.row_expand(), At.row_expand()])
    cols = np.concatenate([A.col_indices, At.col_indices])
    vals = np.concatenate([A.values, -At.values])
    if len(rows) == 0:
        return SymmetryDiagnostic(pattern_ok, 0.0, 0.0, pattern_ok)
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    starts = np.flatnonzero(
        np.concatenate([[True], (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])])
    )
    sums = np.add.reduceat(vals, starts)
    max_asym = float(np.max(np.abs(sums)))
    tol = 1e-12 * mean_abs_nonzero_norm(A)
    return SymmetryDiagnostic(pattern_ok, max_asym, tol, pattern_ok and (max_asym == 0.0 or max_asym < tol))


def pcg_solve(
    A: SparseMatrix,
    b: np.ndarray,
    M: Preconditioner,
    cfg: SolveConfig | None = None,
) -> SolveReport:
    """Solve A x = b from x0 = 0 with preconditioner M.

    Raises NotSpdError when d^T A d <= 0 or r^T M^{-1} r < 0 is observed.
    Returns converged=False when max_iters is exhausted; a True flag
    always means the freshly recomputed relative residual is <= rtol.
    """
    if cfg is None:
        cfg = SolveConfig()
    if A.n_rows != A.n_cols:
        raise ValueError("matrix must be square")
    b = np.asarray(b, dtype=np.float64)
    n = A.n_rows
    if len(b) != n:
        raise ValueError(f"dimension mismatch: matrix is {n}, rhs is {len(b)}")
    max_iters = 20 * n if cfg.max_iters is None else cfg.max_iters
    period = cfg.residual_refresh_period
    use_true = cfg.termination == "true_residual"

    t_solve0 = time.perf_counter_ns()
    t_apply = 0

    norm_b = float(np.linalg.norm(b))
    x = np.zeros(n)
    if norm_b == 0.0:
        report = SolveReport(x, 0, True, M.t_construct_ns, 0, 0)
        if cfg.track_history:
            report.residual_history = [0.0]
        return report

    r = b - spmv(A, x)
    t0 = time.perf_counter_ns()
    d = M.apply(r)
    t_apply += time.perf_counter_ns() - t0
    delta_new = float(r @ d)
    if delta_new < 0.0:
        raise NotSpdError("preconditioner is not positive definite", 0, delta_new)
    delta_0 = delta_new

    history = [float(np.linalg.norm(r)) / norm_b]
    i = 0
    converged = False
    while i < max_iters:
        if not use_true and delta_new <= cfg.rtol**2 * delta_0:
            break
        q = spmv(A, d)
        dq = float(d @ q)
        if dq <= 0.0:
            raise NotSpdError("matrix is not positive definite along search direction", i, dq)
        alpha = delta_new / dq
        x = x + alpha * d
        refreshed = i > 0 and i % period == 0
        if refreshed:
            r = b - spmv(A, x)
        else:
            r = r - alpha * q
        t0 = time.perf_counter_ns()
        s = M.apply(r)
        t_apply += time.perf_counter_ns() - t0
        delta_old = delta_new
        delta_new = float(r @ s)
        if delta_new < 0.0:
            raise NotSpdError("preconditioner is not positive definite", i, delta_new)
        beta = delta_new / delta_old
        d = s + beta * d
        i += 1
        rel = float(np.linalg.norm(r)) / norm_b
        history.append(rel)
        if use_true and rel <= cfg.rtol:
            if refreshed:
                converged = True
                break
            r_fresh = b - spmv(A, x)
            rel_fresh = float(np.linalg.norm(r_fresh)) / norm_b
            if rel_fresh <= cfg.rtol:
                converged = True
                history[-1] = rel_fresh
                break
            r = r_fresh
            history[-1] = rel_fresh

    if not use_true and not converged:
        # delta test exited (or iterations ran out): certify with a fresh residual
        rel_fresh = float(np.linalg.norm(b - spmv(A, x))) / norm_b
        converged = rel_fresh <= cfg.rtol

    t_total = time.perf_counter_ns() - t_solve0
    report = SolveReport(
        x=x,
        k=i,
        converged=converged,
        t_construct_ns=M.t_construct_ns,
        t_apply_total_ns=t_apply,
        t_cg_total_ns=t_total - t_apply,
    )
    if cfg.track_history:
        report.residual_history = history
    return report
