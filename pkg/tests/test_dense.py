import numpy as np
import pytest

from conftest import rand_dense_spd, rand_sparse
from spaigraph.dense import (
    DENSE_GUARD,
    EigenConvergenceError,
    NotPositiveDefiniteError,
    cholesky,
    dense_from_sparse,
    solve_lower,
    solve_spd,
    solve_upper,
    spectral_norm,
    symmetric_eigen,
)
from spaigraph.sparse import SparseMatrix


def test_cholesky_identity():
    np.testing.assert_array_equal(cholesky(np.eye(4)), np.eye(4))


def test_cholesky_hand_expansion():
    L = cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
    np.testing.assert_allclose(L, [[2.0, 0.0], [1.0, np.sqrt(2.0)]], rtol=0, atol=1e-15)


def test_cholesky_reconstruction_random_spd():
    rng = np.random.default_rng(31)
    A = rand_dense_spd(20, rng)
    L = cholesky(A)
    assert np.linalg.norm(L @ L.T - A) / np.linalg.norm(A) < 1e-12
    assert np.max(np.abs(np.triu(L, 1))) == 0.0


def test_cholesky_reports_failing_pivot():
    with pytest.raises(NotPositiveDefiniteError) as exc:
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert exc.value.index == 1


def test_cholesky_rejects_asymmetric():
    with pytest.raises(ValueError):
        cholesky(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_triangular_solves():
    rng = np.random.default_rng(37)
    L = np.tril(rng.standard_normal((6, 6))) + 6.0 * np.eye(6)
    b = rng.standard_normal(6)
    np.testing.assert_allclose(L @ solve_lower(L, b), b, rtol=0, atol=1e-12)
    U = L.T
    np.testing.assert_allclose(U @ solve_upper(U, b), b, rtol=0, atol=1e-12)


def test_solve_spd_matches_numpy_oracle():
    rng = np.random.default_rng(41)
    for n in (3, 17, 50):
        A = rand_dense_spd(n, rng)
        b = rng.standard_normal(n)
        x = solve_spd(A, b)
        assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) < 1e-10
        np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-9, atol=1e-11)


def test_symmetric_eigen_diagonal():
    w, _ = symmetric_eigen(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_allclose(w, [1.0, 2.0, 3.0], rtol=0, atol=1e-14)


def test_symmetric_eigen_known_2x2():
    w, _ = symmetric_eigen(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(w, [1.0, 3.0], rtol=0, atol=1e-14)


def test_symmetric_eigen_random_30x30_properties():
    rng = np.random.default_rng(43)
    B = rng.standard_normal((30, 30))
    A = 0.5 * (B + B.T)
    w, Q = symmetric_eigen(A)
    # trace identity
    assert abs(w.sum() - np.trace(A)) / abs(np.trace(A)) < 1e-10
    # orthonormal eigenvectors
    assert np.linalg.norm(Q.T @ Q - np.eye(30)) < 1e-8
    # eigenpair residuals, relative to |lambda|
    scale = np.max(np.abs(w))
    for i in range(30):
        assert np.linalg.norm(A @ Q[:, i] - w[i] * Q[:, i]) < 1e-8 * scale
    # ascending order and numpy oracle agreement
    assert np.all(np.diff(w) >= 0)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(A), rtol=1e-10, atol=1e-10)


def test_symmetric_eigen_rejects_asymmetric():
    with pytest.raises(ValueError):
        symmetric_eigen(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_spectral_norm_zero_matrix():
    assert spectral_norm(np.zeros((3, 5))) == 0.0


def test_spectral_norm_diagonal():
    assert abs(spectral_norm(np.diag([1.0, -3.0])) - 3.0) < 1e-12


def test_spectral_norm_power_iteration_oracle():
    rng = np.random.default_rng(47)
    E = rng.standard_normal((15, 15))
    gram = E.T @ E
    v = rng.standard_normal(15)
    v /= np.linalg.norm(v)
    for _ in range(5000):
        v = gram @ v
        v /= np.linalg.norm(v)
    lam = float(v @ gram @ v)
    assert abs(spectral_norm(E) - np.sqrt(lam)) / np.sqrt(lam) < 1e-8


def test_spectral_norm_rectangular():
    rng = np.random.default_rng(53)
    E = rng.standard_normal((8, 4))
    assert abs(spectral_norm(E) - np.linalg.svd(E, compute_uv=False)[0]) < 1e-10


def test_dense_from_sparse_faithful_and_guarded():
    A = SparseMatrix.from_coo(2, 3, [0, 1], [2, 0], [5.0, -1.0])
    np.testing.assert_array_equal(dense_from_sparse(A), [[0.0, 0.0, 5.0], [-1.0, 0.0, 0.0]])
    big = SparseMatrix.identity(DENSE_GUARD + 1)
    with pytest.raises(ValueError):
        dense_from_sparse(big)


def test_eigen_convergence_error_exists():
    # the budget is generous; just pin the exception type is importable and
    # subclasses RuntimeError so callers can catch it
    assert issubclass(EigenConvergenceError, RuntimeError)
