"""Reverse-mode tape tests: analytic oracles and central finite differences.

Every gradient assertion compares against either a hand-derived dense
formula or a central difference of the scalar loss; the relative error
denominator follows |FD| + 1e-8 so near-zero coordinates stay testable.
"""

import math

import numpy as np
import pytest

from conftest import rand_sparse, rand_sparse_spd
from spaigraph.autodiff import Tape, Var
from spaigraph.dense import dense_from_sparse
from spaigraph.sparse import SparseMatrix


FD_H = 1e-5
FD_RTOL = 1e-5


def central_fd(f, x, h=FD_H):
    """Central finite difference of scalar f at every coordinate of x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        fp = f(x)
        flat[k] = orig - h
        fm = f(x)
        flat[k] = orig
        g.ravel()[k] = (fp - fm) / (2.0 * h)
    return g


def assert_close_to_fd(auto, fd):
    rel = np.abs(auto - fd) / (np.abs(fd) + 1e-8)
    assert rel.max() < FD_RTOL


# basic mechanics


def test_leaf_and_constant_grad_flags():
    tape = Tape()
    x = tape.leaf([1.0, 2.0])
    c = tape.constant([3.0, 4.0])
    assert x.requires_grad and not c.requires_grad
    loss = tape.dot(x, c)
    tape.backward(loss)
    assert np.array_equal(x.grad, [3.0, 4.0])
    assert c.grad is None


def test_backward_twice_raises():
    tape = Tape()
    x = tape.leaf([1.0])
    loss = tape.dot(x, x)
    tape.backward(loss)
    with pytest.raises(RuntimeError):
        tape.backward(loss)


def test_backward_requires_scalar():
    tape = Tape()
    x = tape.leaf([1.0, 2.0])
    y = tape.add(x, x)
    with pytest.raises(ValueError):
        tape.backward(y)


def test_reused_variable_accumulates():
    tape = Tape()
    x = tape.leaf([3.0])
    y = tape.add(x, x)
    loss = tape.dot(y, y)
    tape.backward(loss)
    # d/dx (2x)^2 = 8x
    assert np.allclose(x.grad, 8.0 * x.value, rtol=0, atol=1e-14)


def test_linear_regression_gradient_is_analytic():
    """Single linear layer + quadratic loss: grad theta = 2 X^T (X theta - y)."""
    rng = np.random.default_rng(3)
    X = rng.standard_normal((7, 4))
    y = rng.standard_normal(7)
    theta0 = rng.standard_normal(4)

    tape = Tape()
    theta = tape.leaf(theta0)
    pred = tape.matmul(tape.constant(X), tape.reshape(theta, (4, 1)))
    resid = tape.add(tape.reshape(pred, (7,)), tape.constant(-y))
    loss = tape.square_norm(resid)
    tape.backward(loss)

    analytic = 2.0 * X.T @ (X @ theta0 - y)
    assert np.allclose(theta.grad, analytic, rtol=1e-12, atol=1e-12)


# per-primitive finite-difference checks


def test_matmul_add_bias_activations_fd():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((6, 3))
    W0 = rng.standard_normal((3, 4))
    b0 = rng.standard_normal(4)
    t = rng.standard_normal((6, 4))

    def run(W, b, act):
        tape = Tape()
        Wv, bv = tape.leaf(W), tape.leaf(b)
        h = tape.add_bias(tape.matmul(tape.constant(X), Wv), bv)
        h = act(tape, h)
        diff = tape.add(h, tape.constant(-t))
        loss = tape.square_norm(tape.reshape(diff, (24,)))
        return tape, Wv, bv, loss

    for act in (lambda tp, h: tp.relu(h), lambda tp, h: tp.tanh(h)):
        tape, Wv, bv, loss = run(W0, b0, act)
        tape.backward(loss)
        fd_W = central_fd(lambda W: float(run(W, b0, act)[3].value), W0.copy())
        fd_b = central_fd(lambda b: float(run(W0, b, act)[3].value), b0.copy())
        assert_close_to_fd(Wv.grad, fd_W)
        assert_close_to_fd(bv.grad, fd_b)


def test_gather_concat_segment_sum_fd():
    rng = np.random.default_rng(8)
    x0 = rng.standard_normal((5, 2))
    idx = np.array([0, 2, 2, 4, 1, 3])
    offsets = np.array([0, 2, 3, 3, 6])
    t = rng.standard_normal((4, 4))

    def run(x):
        tape = Tape()
        xv = tape.leaf(x)
        g = tape.gather(xv, idx)
        both = tape.concat([g, g])
        seg = tape.segment_sum(both, offsets, 4)
        diff = tape.add(seg, tape.constant(-t))
        loss = tape.square_norm(tape.reshape(diff, (16,)))
        return tape, xv, loss

    tape, xv, loss = run(x0)
    tape.backward(loss)
    fd = central_fd(lambda x: float(run(x)[2].value), x0.copy())
    assert_close_to_fd(xv.grad, fd)


def test_scale_add_const_fd():
    rng = np.random.default_rng(11)
    x0 = rng.standard_normal(6)
    shift = rng.standard_normal(6)

    def run(x):
        tape = Tape()
        xv = tape.leaf(x)
        y = tape.add_const(tape.scale(xv, -1.7), shift)
        loss = tape.square_norm(y)
        return tape, xv, loss

    tape, xv, loss = run(x0)
    tape.backward(loss)
    fd = central_fd(lambda x: float(run(x)[2].value), x0.copy())
    assert_close_to_fd(xv.grad, fd)


def test_spmv_values_gradient_both_arguments():
    rng = np.random.default_rng(13)
    A = rand_sparse(6, 5, rng, density=0.4)
    v0 = A.values.copy()
    x0 = rng.standard_normal(5)
    c = rng.standard_normal(6)

    def run(vals, x):
        tape = Tape()
        vv, xv = tape.leaf(vals), tape.leaf(x)
        y = tape.spmv_values(vv, A.pattern, xv)
        loss = tape.dot(y, tape.constant(c))
        return tape, vv, xv, loss

    tape, vv, xv, loss = run(v0, x0)
    tape.backward(loss)
    # loss = c^T A x is bilinear: dvals = (c x^T) restricted to pattern, dx = A^T c
    rows = A.row_expand()
    assert np.allclose(vv.grad, c[rows] * x0[A.col_indices], rtol=1e-13, atol=1e-13)
    assert np.allclose(xv.grad, dense_from_sparse(A).T @ c, rtol=1e-13, atol=1e-13)


def test_spmv_t_values_gradient_both_arguments():
    rng = np.random.default_rng(17)
    A = rand_sparse(6, 5, rng, density=0.4)
    v0 = A.values.copy()
    x0 = rng.standard_normal(6)
    c = rng.standard_normal(5)

    def run(vals, x):
        tape = Tape()
        vv, xv = tape.leaf(vals), tape.leaf(x)
        y = tape.spmv_t_values(vv, A.pattern, xv)
        loss = tape.dot(y, tape.constant(c))
        return tape, vv, xv, loss

    tape, vv, xv, loss = run(v0, x0)
    tape.backward(loss)
    rows = A.row_expand()
    assert np.allclose(vv.grad, x0[rows] * c[A.col_indices], rtol=1e-13, atol=1e-13)
    assert np.allclose(xv.grad, dense_from_sparse(A) @ c, rtol=1e-13, atol=1e-13)


def test_spmv_const_gradient():
    rng = np.random.default_rng(19)
    A = rand_sparse(5, 5, rng, density=0.5)
    x0 = rng.standard_normal(5)
    c = rng.standard_normal(5)

    tape = Tape()
    xv = tape.leaf(x0)
    y = tape.spmv_const(A, xv)
    loss = tape.dot(y, tape.constant(c))
    tape.backward(loss)
    assert np.allclose(xv.grad, dense_from_sparse(A).T @ c, rtol=1e-13, atol=1e-13)


def test_dual_path_spai_product_gradient():
    """u = G (G^T w): the values feed both the G and G^T applications.

    The backward pass must accumulate both contributions; checked
    against central differences coordinate by coordinate.
    """
    rng = np.random.default_rng(23)
    A = rand_sparse_spd(7, rng)
    g0 = rng.standard_normal(A.nnz)
    w = rng.standard_normal(7)
    c = rng.standard_normal(7)

    def f(g):
        tape = Tape()
        gv = tape.leaf(g)
        gtw = tape.spmv_t_values(gv, A.pattern, tape.constant(w))
        u = tape.spmv_values(gv, A.pattern, gtw)
        loss = tape.dot(u, tape.constant(c))
        return tape, gv, loss

    tape, gv, loss = f(g0)
    tape.backward(loss)
    fd = central_fd(lambda g: float(f(g)[2].value), g0.copy())
    assert_close_to_fd(gv.grad, fd)


def test_normalized_residual_loss_matches_dense_and_fd():
    rng = np.random.default_rng(29)
    A = rand_sparse_spd(6, rng)
    u0 = rng.standard_normal(6)
    w = rng.standard_normal(6)
    dense = dense_from_sparse(A)
    norm = np.abs(A.values).mean()

    def f(u):
        tape = Tape()
        uv = tape.leaf(u)
        loss = tape.normalized_residual_loss(A, uv, w)
        return tape, uv, loss

    tape, uv, loss = f(u0)
    oracle = float(np.sum((dense @ u0 / norm - w) ** 2))
    assert abs(float(loss.value) - oracle) < 1e-12 * max(1.0, abs(oracle))

    tape.backward(loss)
    fd = central_fd(lambda u: float(f(u)[2].value), u0.copy())
    assert_close_to_fd(uv.grad, fd)


def test_normalized_residual_loss_rejects_unknown_norm():
    A = SparseMatrix.from_dense(np.eye(2))
    tape = Tape()
    u = tape.leaf([1.0, 2.0])
    with pytest.raises(ValueError):
        tape.normalized_residual_loss(A, u, np.zeros(2), "spectral")
