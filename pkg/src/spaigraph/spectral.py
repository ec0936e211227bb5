"""Dense-path spectral diagnostics for preconditioned operators.

Everything here densifies (behind the size guard) so the numbers can be
trusted as oracles: the spectrum of A M^{-1} via a symmetric similarity
transform, the classical and Kaporin condition numbers, and a
singular-value bound relating kappa(A M^{-1}) to the spectral norm of
the normalized error matrix E = A M^{-1} / ||A|| - I.
"""

from __future__ import annotations

import math

import numpy as np

from .dense import cholesky, dense_from_sparse, spectral_norm, symmetric_eigen
from .precond import Preconditioner, build_learned_spai
from .sparse import SparseMatrix, mean_abs_nonzero_norm

__all__ = [
    "PreconditionerNotSpdError",
    "preconditioned_spectrum",
    "condition_number",
    "kaporin_number",
    "condition_bound_check",
    "spectral_record",
]


class PreconditionerNotSpdError(RuntimeError):
    """The preconditioned operator has a nonpositive eigenvalue."""

    def __init__(self, min_eigenvalue: float):
        super().__init__(
            f"preconditioned operator has min eigenvalue {min_eigenvalue:.6e}; "
            "the preconditioner is not positive definite"
        )
        self.min_eigenvalue = min_eigenvalue


def _dense_inverse_image(A: SparseMatrix, M: Preconditioner) -> tuple[np.ndarray, np.ndarray]:
    """Densified A and K = M^{-1}, the latter recovered column by column."""
    Ad = dense_from_sparse(A)
    n = A.n_rows
    K = np.empty((n, n))
    basis = np.eye(n)
    for i in range(n):
        K[:, i] = M.apply(basis[i])
    return Ad, K


def _spectrum_of(Ad: np.ndarray, K: np.ndarray) -> np.ndarray:
    L = cholesky(Ad)
    S = L.T @ K @ L
    S = 0.5 * (S + S.T)
    lam, _ = symmetric_eigen(S)
    if lam[0] <= 0.0:
        raise PreconditionerNotSpdError(float(lam[0]))
    return lam


def preconditioned_spectrum(A: SparseMatrix, M: Preconditioner) -> np.ndarray:
    """Eigenvalues of A M^{-1}, ascending.

    With A = L L^T the spectrum of A M^{-1} equals that of the symmetric
    matrix L^T K L where K = M^{-1} is recovered column by column from
    M.apply.  Raises if A fails Cholesky or any eigenvalue is
    nonpositive.
    """
    Ad, K = _dense_inverse_image(A, M)
    return _spectrum_of(Ad, K)


def condition_number(lam: np.ndarray) -> float:
    """max / min of a positive spectrum."""
    lam = np.asarray(lam, dtype=np.float64)
    if lam.size == 0:
        raise ValueError("empty spectrum")
    if lam.min() <= 0.0:
        raise ValueError("condition number needs a positive spectrum")
    return float(lam.max() / lam.min())


def kaporin_number(lam: np.ndarray) -> float:
    """Arithmetic over geometric mean of the spectrum, in log space."""
    lam = np.asarray(lam, dtype=np.float64)
    if lam.size == 0:
        raise ValueError("empty spectrum")
    if lam.min() <= 0.0:
        raise ValueError("Kaporin number needs a positive spectrum")
    arithmetic = math.fsum(lam.tolist()) / lam.size
    geometric = math.exp(math.fsum(np.log(lam).tolist()) / lam.size)
    return arithmetic / geometric


def spectral_record(A: SparseMatrix, M: Preconditioner) -> dict:
    """Full diagnostic record for one (matrix, preconditioner) pair.

    Forms E = A M^{-1} / ||A|| - I densely (mean-abs-entry norm, matching
    the training loss).  Singular-value perturbation gives, whenever
    sigma_max(E) < 1, kappa <= (1 + sigma_max) / (1 - sigma_max); the
    first-order expansion 1 + 2 sigma_max is reported alongside.  The
    returned record uses None for the bound fields when sigma_max >= 1.
    """
    Ad, K = _dense_inverse_image(A, M)
    n = A.n_rows
    norm = mean_abs_nonzero_norm(A)
    E = Ad @ K / norm - np.eye(n)
    sigma = spectral_norm(E)
    lam = _spectrum_of(Ad, K)
    kappa = condition_number(lam)
    kaporin = kaporin_number(lam)
    if sigma < 1.0:
        bound = (1.0 + sigma) / (1.0 - sigma)
        holds = bool(kappa <= bound + 1e-8)
    else:
        bound = None
        holds = None
    return {
        "kappa": kappa,
        "kaporin": kaporin,
        "sigma_max_E": sigma,
        "bound_value": bound,
        "bound_holds": holds,
        "first_order_bound": 1.0 + 2.0 * sigma,
    }


def condition_bound_check(A: SparseMatrix, G: SparseMatrix, epsilon: float) -> dict:
    """spectral_record for the learned form M^{-1} = GG^T + eps I."""
    return spectral_record(A, build_learned_spai(G, epsilon))
