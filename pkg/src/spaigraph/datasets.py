"""Deterministic SPD problem generators, splits, and on-disk caching.

Two families: 5-point finite-difference diffusion on the unit square
(constant coefficient "poisson2d", log-uniform random coefficient
"heat2d") and random sparse Gram matrices A = PP^T + eps I
("synthetic").  Everything is reproducible from integer seeds via
numpy's PCG64 generator.

Cache layout: <root>/<family>/<seed>/{matrix.mtx, meta.json, graph.bin,
rhs.vec}.  All writes go through a temp file and an atomic rename.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphfeat import MatrixGraph, build_graph, read_graph_bin, write_graph_bin
from .sparse import SparseMatrix, read_matrix_market, write_matrix_market

__all__ = [
    "ProblemMeta",
    "gen_poisson2d",
    "gen_synthetic",
    "make_split",
    "gen_rhs",
    "write_rhs_vec",
    "read_rhs_vec",
    "problem_dir",
    "save_problem",
    "load_problem",
]

COEFF_LO = 1e-4
COEFF_HI = 5e-4
SYNTHETIC_EPS = 1e-4


@dataclass(frozen=True, eq=False)
class ProblemMeta:
    """Generation record sufficient to rebuild a problem instance."""

    family: str
    n: int
    grid: tuple | None = None
    coeff: np.ndarray | None = None
    coeff_seed: int | None = None
    gen_seed: int | None = None
    density: float | None = None
    result_density: float | None = None
    epsilon_reg: float | None = None

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "n": self.n,
            "grid": list(self.grid) if self.grid is not None else None,
            "coeff": self.coeff.tolist() if self.coeff is not None else None,
            "coeff_seed": self.coeff_seed,
            "gen_seed": self.gen_seed,
            "density": self.density,
            "result_density": self.result_density,
            "epsilon_reg": self.epsilon_reg,
        }

    @staticmethod
    def from_dict(d: dict) -> "ProblemMeta":
        return ProblemMeta(
            family=d["family"],
            n=int(d["n"]),
            grid=tuple(d["grid"]) if d.get("grid") is not None else None,
            coeff=np.asarray(d["coeff"], dtype=np.float64) if d.get("coeff") is not None else None,
            coeff_seed=d.get("coeff_seed"),
            gen_seed=d.get("gen_seed"),
            density=d.get("density"),
            result_density=d.get("result_density"),
            epsilon_reg=d.get("epsilon_reg"),
        )


def gen_poisson2d(nx: int, ny: int, coeff_seed: int | None = None):
    """5-point -div(a grad u) on an nx-by-ny interior grid, Dirichlet walls.

    coeff_seed None keeps a = 1 (family "poisson2d"); otherwise a is
    sampled per node log-uniform from [1e-4, 5e-4] (family "heat2d").
    Face coefficients are arithmetic means of the two adjacent nodes;
    boundary faces reuse the interior node's value.  Entries carry the
    1/h^2 mesh scaling, so with a = 1 the eigenvalues are the analytic
    4 (sin^2(pi h i / 2) + sin^2(pi h j / 2)) / h^2.
    """
    if nx < 1 or ny < 1:
        raise ValueError("grid dimensions must be positive")
    n = nx * ny
    if coeff_seed is None:
        coeff = np.ones(n)
        family = "poisson2d"
    else:
        rng = np.random.default_rng(coeff_seed)
        coeff = np.exp(rng.uniform(math.log(COEFF_LO), math.log(COEFF_HI), size=n))
        family = "heat2d"

    a = coeff.reshape(ny, nx)
    inv_hx2 = float((nx + 1) ** 2)
    inv_hy2 = float((ny + 1) ** 2)

    # face coefficients; boundary faces keep the node's own value
    west = a.copy()
    west[:, 1:] = 0.5 * (a[:, 1:] + a[:, :-1])
    east = a.copy()
    east[:, :-1] = 0.5 * (a[:, :-1] + a[:, 1:])
    south = a.copy()
    south[1:, :] = 0.5 * (a[1:, :] + a[:-1, :])
    north = a.copy()
    north[:-1, :] = 0.5 * (a[:-1, :] + a[1:, :])

    diag = (west + east) * inv_hx2 + (south + north) * inv_hy2
    idx = np.arange(n).reshape(ny, nx)

    rows = [idx.ravel()]
    cols = [idx.ravel()]
    vals = [diag.ravel()]
    rows.append(idx[:, 1:].ravel())
    cols.append(idx[:, :-1].ravel())
    vals.append((-west[:, 1:] * inv_hx2).ravel())
    rows.append(idx[:, :-1].ravel())
    cols.append(idx[:, 1:].ravel())
    vals.append((-east[:, :-1] * inv_hx2).ravel())
    rows.append(idx[1:, :].ravel())
    cols.append(idx[:-1, :].ravel())
    vals.append((-south[1:, :] * inv_hy2).ravel())
    rows.append(idx[:-1, :].ravel())
    cols.append(idx[1:, :].ravel())
    vals.append((-north[:-1, :] * inv_hy2).ravel())

    A = SparseMatrix.from_coo(
        n, n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    )
    meta = ProblemMeta(family=family, n=n, grid=(nx, ny), coeff=coeff, coeff_seed=coeff_seed)
    return A, meta


def gen_synthetic(n: int, density: float, seed: int):
    """A = PP^T + eps I with P a uniformly random sparse standard-normal matrix."""
    if n < 1:
        raise ValueError("matrix size must be positive")
    if not 0.0 <= density <= 1.0:
        raise ValueError("density must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    nnz_p = int(round(density * n * n))
    flat = rng.choice(n * n, size=nnz_p, replace=False)
    p_rows = flat // n
    p_cols = flat % n
    p_vals = rng.standard_normal(nnz_p)

    # (PP^T)_ij = sum_c P_ic P_jc: group P's entries by column, expand pairs
    acc: dict[tuple[int, int], float] = {}
    order = np.lexsort((p_rows, p_cols))
    p_rows, p_cols, p_vals = p_rows[order], p_cols[order], p_vals[order]
    start = 0
    while start < nnz_p:
        stop = start
        while stop < nnz_p and p_cols[stop] == p_cols[start]:
            stop += 1
        ri = p_rows[start:stop]
        vi = p_vals[start:stop]
        for p in range(len(ri)):
            for q in range(len(ri)):
                key = (int(ri[p]), int(ri[q]))
                acc[key] = acc.get(key, 0.0) + float(vi[p]) * float(vi[q])
        start = stop
    for i in range(n):
        acc[(i, i)] = acc.get((i, i), 0.0) + SYNTHETIC_EPS

    keys = sorted(acc)
    rows = np.array([k[0] for k in keys], dtype=np.int64)
    cols = np.array([k[1] for k in keys], dtype=np.int64)
    vals = np.array([acc[k] for k in keys])
    A = SparseMatrix.from_coo(n, n, rows, cols, vals)
    meta = ProblemMeta(
        family="synthetic",
        n=n,
        gen_seed=seed,
        density=density,
        result_density=A.nnz / (n * n),
        epsilon_reg=SYNTHETIC_EPS,
    )
    return A, meta


def make_split(dataset, ratio: tuple = (4, 1), seed: int = 0):
    """Deterministic shuffled split into (train, test) by the given ratio."""
    items = list(dataset)
    tr, te = ratio
    if tr < 1 or te < 1:
        raise ValueError("split ratio parts must be positive")
    perm = np.random.default_rng(seed).permutation(len(items))
    n_test = len(items) * te // (tr + te)
    test = [items[i] for i in perm[:n_test]]
    train = [items[i] for i in perm[n_test:]]
    return train, test


def gen_rhs(meta: ProblemMeta, seed: int) -> np.ndarray:
    """Unit-norm standard-normal right-hand side for the given problem."""
    b = np.random.default_rng(seed).standard_normal(meta.n)
    return b / np.linalg.norm(b)


def _atomic_write(path: Path, write_fn):
    tmp = path.with_name(path.name + ".tmp")
    write_fn(tmp)
    os.replace(tmp, path)


def write_rhs_vec(b: np.ndarray, path):
    """u64 little-endian length header followed by f64 little-endian data."""
    b = np.asarray(b, dtype=np.float64)

    def _write(p):
        with open(p, "wb") as fh:
            fh.write(struct.pack("<Q", len(b)))
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())

    _atomic_write(Path(path), _write)


def read_rhs_vec(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise ValueError("rhs file too short for its header")
    (n,) = struct.unpack_from("<Q", raw, 0)
    if len(raw) != 8 + 8 * n:
        raise ValueError(f"rhs file length {len(raw)} does not match header count {n}")
    return np.frombuffer(raw, dtype="<f8", offset=8).astype(np.float64)


def problem_dir(root, family: str, seed: int) -> Path:
    return Path(root) / family / str(seed)


def save_problem(root, seed: int, A: SparseMatrix, meta: ProblemMeta, b: np.ndarray,
                 graph: MatrixGraph | None = None) -> Path:
    """Cache one problem instance under <root>/<family>/<seed>/."""
    d = problem_dir(root, meta.family, seed)
    d.mkdir(parents=True, exist_ok=True)
    if graph is None:
        graph = build_graph(A, meta)
    _atomic_write(d / "matrix.mtx", lambda p: write_matrix_market(A, p))
    _atomic_write(d / "meta.json", lambda p: Path(p).write_text(json.dumps(meta.to_dict())))
    _atomic_write(d / "graph.bin", lambda p: write_graph_bin(graph, p))
    write_rhs_vec(b, d / "rhs.vec")
    return d


def load_problem(root, family: str, seed: int):
    """Load (A, meta, b, graph) from the cache directory."""
    d = problem_dir(root, family, seed)
    A = read_matrix_market(d / "matrix.mtx")
    meta = ProblemMeta.from_dict(json.loads((d / "meta.json").read_text()))
    b = read_rhs_vec(d / "rhs.vec")
    graph = read_graph_bin(d / "graph.bin")
    return A, meta, b, graph
