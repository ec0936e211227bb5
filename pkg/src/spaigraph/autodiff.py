"""Tape-based reverse-mode differentiation over numpy arrays.

A Tape records primitive operations as they execute; backward() replays
the closures in exact reverse order, accumulating gradients into Var
slots.  The primitive set is exactly what the graph network and the
training loss need: dense affine layers, activations, gather/segment
ops aligned with CSR storage, sparse matrix-vector products whose
values (not just the dense vector) may carry gradients, and scalar
reductions.
"""

from __future__ import annotations

import math

import numpy as np

from .sparse import SparseMatrix, SparsityPattern, _segment_sums

__all__ = ["Var", "Tape"]


class Var:
    """A tape-tracked array (or scalar) with a lazily allocated gradient."""

    __slots__ = ("value", "grad", "requires_grad")

    def __init__(self, value, requires_grad=True):
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad

    def _bump(self, delta):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.value, dtype=np.float64)
        self.grad += delta


def _csr_rows(pattern: SparsityPattern) -> np.ndarray:
    return np.repeat(np.arange(pattern.n_rows, dtype=np.int64), np.diff(pattern.row_offsets))


class Tape:
    """Records a forward computation; differentiates it once, in reverse."""

    def __init__(self):
        self._entries = []
        self._consumed = False

    def leaf(self, value) -> Var:
        return Var(np.asarray(value, dtype=np.float64))

    def constant(self, value) -> Var:
        return Var(np.asarray(value, dtype=np.float64), requires_grad=False)

    def _record(self, fn):
        self._entries.append(fn)

    # dense layers

    def matmul(self, a: Var, b: Var) -> Var:
        out = Var(a.value @ b.value)

        def back():
            if out.grad is None:
                return
            a._bump(out.grad @ b.value.T)
            b._bump(a.value.T @ out.grad)

        self._record(back)
        return out

    def add_bias(self, x: Var, bias: Var) -> Var:
        out = Var(x.value + bias.value)

        def back():
            if out.grad is None:
                return
            x._bump(out.grad)
            bias._bump(out.grad.sum(axis=0))

        self._record(back)
        return out

    def relu(self, x: Var) -> Var:
        mask = x.value > 0.0
        out = Var(np.where(mask, x.value, 0.0))

        def back():
            if out.grad is None:
                return
            x._bump(np.where(mask, out.grad, 0.0))

        self._record(back)
        return out

    def tanh(self, x: Var) -> Var:
        t = np.tanh(x.value)
        out = Var(t)

        def back():
            if out.grad is None:
                return
            x._bump(out.grad * (1.0 - t * t))

        self._record(back)
        return out

    # structure ops

    def gather(self, x: Var, idx: np.ndarray) -> Var:
        out = Var(x.value[idx])

        def back():
            if out.grad is None:
                return
            if x.requires_grad:
                if x.grad is None:
                    x.grad = np.zeros_like(x.value, dtype=np.float64)
                np.add.at(x.grad, idx, out.grad)

        self._record(back)
        return out

    def segment_sum(self, x: Var, row_offsets: np.ndarray, n_rows: int) -> Var:
        counts = np.diff(row_offsets)
        out = Var(_segment_sums(x.value, row_offsets))

        def back():
            if out.grad is None:
                return
            x._bump(np.repeat(out.grad, counts, axis=0))

        self._record(back)
        return out

    def concat(self, parts: list[Var]) -> Var:
        out = Var(np.concatenate([p.value for p in parts], axis=1))
        widths = [p.value.shape[1] for p in parts]
        bounds = np.cumsum([0] + widths)

        def back():
            if out.grad is None:
                return
            for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
                p._bump(out.grad[:, lo:hi])

        self._record(back)
        return out

    def reshape(self, x: Var, shape) -> Var:
        old = x.value.shape
        out = Var(x.value.reshape(shape))

        def back():
            if out.grad is None:
                return
            x._bump(out.grad.reshape(old))

        self._record(back)
        return out

    # arithmetic

    def add(self, a: Var, b: Var) -> Var:
        out = Var(a.value + b.value)

        def back():
            if out.grad is None:
                return
            a._bump(out.grad)
            b._bump(out.grad)

        self._record(back)
        return out

    def scale(self, x: Var, alpha: float) -> Var:
        out = Var(alpha * x.value)

        def back():
            if out.grad is None:
                return
            x._bump(alpha * out.grad)

        self._record(back)
        return out

    def add_const(self, x: Var, c) -> Var:
        out = Var(x.value + c)

        def back():
            if out.grad is None:
                return
            x._bump(out.grad)

        self._record(back)
        return out

    # sparse products; `vals` carries the gradient, the pattern is fixed

    def spmv_values(self, vals: Var, pattern: SparsityPattern, x: Var) -> Var:
        """y = A x where A = (pattern, vals.value)."""
        rows = _csr_rows(pattern)
        cols = pattern.col_indices
        y = _segment_sums(vals.value * x.value[cols], pattern.row_offsets)
        out = Var(y)

        def back():
            if out.grad is None:
                return
            vals._bump(out.grad[rows] * x.value[cols])
            if x.requires_grad:
                contrib = vals.value * out.grad[rows]
                dx = np.zeros_like(x.value)
                np.add.at(dx, cols, contrib)
                x._bump(dx)

        self._record(back)
        return out

    def spmv_t_values(self, vals: Var, pattern: SparsityPattern, x: Var) -> Var:
        """y = A^T x where A = (pattern, vals.value)."""
        rows = _csr_rows(pattern)
        cols = pattern.col_indices
        y = np.zeros(pattern.n_cols)
        np.add.at(y, cols, vals.value * x.value[rows])
        out = Var(y)

        def back():
            if out.grad is None:
                return
            vals._bump(x.value[rows] * out.grad[cols])
            if x.requires_grad:
                x._bump(_segment_sums(vals.value * out.grad[cols], pattern.row_offsets))

        self._record(back)
        return out

    def spmv_const(self, A: SparseMatrix, x: Var, exact: bool = False) -> Var:
        """y = A x with constant A; exact=True sums each row with fsum."""
        rows = A.row_expand()
        if exact:
            contrib = A.values * x.value[A.col_indices]
            y = np.empty(A.n_rows)
            offs = A.row_offsets
            for i in range(A.n_rows):
                y[i] = math.fsum(contrib[offs[i] : offs[i + 1]])
        else:
            y = _segment_sums(A.values * x.value[A.col_indices], A.row_offsets)
        out = Var(y)

        def back():
            if out.grad is None:
                return
            if x.requires_grad:
                dx = np.zeros_like(x.value)
                np.add.at(dx, A.col_indices, A.values * out.grad[rows])
                x._bump(dx)

        self._record(back)
        return out

    def normalized_residual_loss(
        self, A: SparseMatrix, u: Var, w: np.ndarray, norm_kind: str = "mean_abs_nonzero"
    ) -> Var:
        """||A u / ||A|| - w||^2 with the whole A side in extended precision.

        Evaluating the norm, the product A u, and the residual in
        longdouble means rescaling A disturbs the value only through the
        rounding of the scaled entries themselves, keeping the loss
        scale-invariant to a few ulps.  Backward runs in float64.
        """
        vals_ld = A.values.astype(np.longdouble)
        abs_ld = np.abs(vals_ld)
        if norm_kind == "mean_abs_nonzero":
            norm_ld = abs_ld.sum() / A.nnz
        elif norm_kind == "frobenius":
            norm_ld = np.sqrt((vals_ld * vals_ld).sum())
        elif norm_kind == "entrywise_l1":
            norm_ld = abs_ld.sum()
        else:
            raise ValueError(f"unknown norm kind {norm_kind!r}")
        if norm_ld == 0:
            raise ValueError("matrix norm is zero")
        u_ld = u.value.astype(np.longdouble)
        y_ld = _segment_sums(vals_ld * u_ld[A.col_indices], A.row_offsets)
        z_ld = y_ld / norm_ld - w.astype(np.longdouble)
        out = Var(np.float64((z_ld * z_ld).sum()))
        z64 = z_ld.astype(np.float64)
        inv_norm = float(np.longdouble(1.0) / norm_ld)

        def back():
            if out.grad is None or not u.requires_grad:
                return
            dz = (2.0 * float(out.grad) * inv_norm) * z64
            du = np.zeros_like(u.value)
            np.add.at(du, A.col_indices, A.values * dz[A.row_expand()])
            u._bump(du)

        self._record(back)
        return out

    # reductions

    def dot(self, a: Var, b: Var) -> Var:
        out = Var(np.float64(a.value @ b.value))

        def back():
            if out.grad is None:
                return
            g = float(out.grad)
            a._bump(g * b.value)
            b._bump(g * a.value)

        self._record(back)
        return out

    def square_norm(self, x: Var) -> Var:
        """||x||^2 summed exactly (fsum), so the value is order-independent."""
        v = x.value
        out = Var(np.float64(math.fsum((v * v).tolist())))

        def back():
            if out.grad is None:
                return
            x._bump(2.0 * float(out.grad) * v)

        self._record(back)
        return out

    def backward(self, loss: Var):
        """Accumulate d(loss)/d(leaf) into every reachable Var's .grad."""
        if self._consumed:
            raise RuntimeError("backward already run on this tape")
        if np.ndim(loss.value) != 0:
            raise ValueError("backward requires a scalar loss")
        self._consumed = True
        loss.grad = np.ones_like(loss.value, dtype=np.float64)
        for fn in reversed(self._entries):
            fn()
