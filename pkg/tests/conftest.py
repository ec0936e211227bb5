"""Shared generators for the test suite.

Every helper takes an explicit numpy Generator so tests stay
reproducible; oracles built here deliberately avoid the package's own
kernels (dense numpy only) except where a test states otherwise.
"""

import numpy as np
import pytest

from spaigraph.sparse import SparseMatrix

_criterion_lines = []


@pytest.fixture
def criterion_line():
    """Record one PASS/FAIL line for the acceptance gate's final summary."""

    def record(ok: bool, number: int, name: str, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:02d} {name}: {detail}"
        _criterion_lines.append((number, line))
        print(line, flush=True)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_criterion_lines):
            terminalreporter.write_line(line)


def rand_dense_spd(n, rng, lo=1.0, hi=10.0):
    """Dense SPD matrix with eigenvalues uniform in [lo, hi] via Q diag Q^T."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = rng.uniform(lo, hi, size=n)
    return (q * lam) @ q.T


def rand_sparse_spd(n, rng, extra_per_row=3):
    """Sparse diagonally dominant SPD matrix with a symmetric pattern."""
    rows, cols = [], []
    for i in range(n):
        for j in rng.integers(0, n, size=extra_per_row):
            if i != j:
                rows += [i, int(j)]
                cols += [int(j), i]
    pairs = sorted(set(zip(rows, cols)))
    vals = {}
    for i, j in pairs:
        if i < j:
            v = rng.uniform(-1.0, 1.0)
            vals[(i, j)] = v
            vals[(j, i)] = v
    dense = np.zeros((n, n))
    for (i, j), v in vals.items():
        dense[i, j] = v
    row_abs = np.abs(dense).sum(axis=1)
    dense[np.arange(n), np.arange(n)] = row_abs + rng.uniform(0.5, 2.0, size=n)
    return SparseMatrix.from_dense(dense)


def rand_sparse(n_rows, n_cols, rng, density=0.1):
    """Random rectangular sparse matrix, at least one entry."""
    keep = rng.random((n_rows, n_cols)) < density
    if not keep.any():
        keep[rng.integers(n_rows), rng.integers(n_cols)] = True
    dense = np.where(keep, rng.standard_normal((n_rows, n_cols)), 0.0)
    return SparseMatrix.from_dense(dense, keep=keep)


def poisson2d_coo(nx, ny):
    """Textbook 5-point Laplacian (4 / -1 stencil) on an nx-by-ny interior grid.

    Built entry-by-entry as an independent stencil oracle; no package
    generator involved.
    """
    def node(ix, iy):
        return iy * nx + ix

    rows, cols, vals = [], [], []
    for iy in range(ny):
        for ix in range(nx):
            i = node(ix, iy)
            rows.append(i)
            cols.append(i)
            vals.append(4.0)
            for jx, jy in ((ix - 1, iy), (ix + 1, iy), (ix, iy - 1), (ix, iy + 1)):
                if 0 <= jx < nx and 0 <= jy < ny:
                    rows.append(i)
                    cols.append(node(jx, jy))
                    vals.append(-1.0)
    return SparseMatrix.from_coo(nx * ny, nx * ny, rows, cols, vals)
