"""Matrix-to-graph conversion: the network's input representation.

A square matrix with a symmetric pattern becomes a graph whose nodes
are the unknowns and whose edges are the stored entries, enumerated in
CSR order so edge-aligned arrays map back to matrix positions by index.
Edge features are the stored values divided by the mean-abs-nonzero
norm; node features depend on the problem family.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .sparse import SparseMatrix, mean_abs_nonzero_norm, _segment_sums

__all__ = ["MatrixGraph", "build_graph", "write_graph_bin", "read_graph_bin"]

_MAGIC = b"SPGRAPH\x01"


@dataclass(frozen=True)
class MatrixGraph:
    """Feature arrays aligned with a matrix's CSR enumeration.

    edge_list[k] = (i, j) of stored entry k; edge_features[k] is that
    entry's feature vector.  norm_A is the scaling applied to edge
    features, kept so matrix values remain reconstructible.
    """

    n_nodes: int
    node_features: np.ndarray
    edge_list: np.ndarray
    edge_features: np.ndarray
    norm_A: float

    def __post_init__(self):
        object.__setattr__(self, "node_features", np.ascontiguousarray(self.node_features, dtype=np.float64))
        object.__setattr__(self, "edge_list", np.ascontiguousarray(self.edge_list, dtype=np.int64))
        object.__setattr__(self, "edge_features", np.ascontiguousarray(self.edge_features, dtype=np.float64))
        if self.node_features.ndim != 2 or self.node_features.shape[0] != self.n_nodes:
            raise ValueError("node_features must be (n_nodes, d_node)")
        if self.edge_list.ndim != 2 or self.edge_list.shape[1] != 2:
            raise ValueError("edge_list must be (n_edges, 2)")
        if self.edge_features.ndim != 2 or self.edge_features.shape[0] != self.edge_list.shape[0]:
            raise ValueError("edge_features must be (n_edges, d_edge)")

    @property
    def n_edges(self) -> int:
        return self.edge_list.shape[0]

    @property
    def d_node(self) -> int:
        return self.node_features.shape[1]

    @property
    def d_edge(self) -> int:
        return self.edge_features.shape[1]


def build_graph(A: SparseMatrix, meta=None) -> MatrixGraph:
    """Convert a square symmetric-pattern matrix into its feature graph.

    meta selects the node-feature recipe: objects with family
    "poisson2d"/"heat2d" get 3-dim PDE features [grid x, grid y,
    relative coefficient]; anything else (including None) gets the
    2-dim algebraic features [row mean / norm, diagonal / norm].

    The coefficient channel is divided by its mean so it sits at
    unit scale regardless of the physical magnitude of a(x); the
    constant-coefficient case yields exactly 1.0 everywhere.
    """
    if A.n_rows != A.n_cols:
        raise ValueError("graph requires a square matrix")
    if not A.pattern.is_symmetric():
        raise ValueError("graph requires a symmetric sparsity pattern")
    n = A.n_rows
    norm = mean_abs_nonzero_norm(A)
    rows = A.row_expand()
    edge_list = np.stack([rows, A.col_indices], axis=1)
    edge_features = (A.values / norm)[:, None]

    family = getattr(meta, "family", None)
    if family in ("poisson2d", "heat2d"):
        grid = meta.grid
        coeff = np.asarray(meta.coeff, dtype=np.float64)
        if grid is None or int(np.prod(grid)) != n:
            raise ValueError("meta grid does not match matrix size")
        if len(coeff) != n:
            raise ValueError("meta coefficient field does not match matrix size")
        nx, ny = grid
        idx = np.arange(n)
        ix, iy = idx % nx, idx // nx
        hx, hy = 1.0 / (nx + 1), 1.0 / (ny + 1)
        node_features = np.stack(
            [(ix + 1) * hx, (iy + 1) * hy, coeff / coeff.mean()], axis=1
        )
    else:
        if family is not None and family != "synthetic":
            raise ValueError(f"unknown problem family {family!r}")
        row_sums = _segment_sums(A.values, A.row_offsets)
        node_features = np.stack([row_sums / n / norm, A.diagonal() / norm], axis=1)
    return MatrixGraph(n, node_features, edge_list, edge_features, norm)


def write_graph_bin(graph: MatrixGraph, path):
    """Flat binary container: magic, counts/dims header, then the arrays."""
    header = struct.pack(
        "<4Qd",
        graph.n_nodes,
        graph.n_edges,
        graph.d_node,
        graph.d_edge,
        graph.norm_A,
    )
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(header)
        fh.write(np.ascontiguousarray(graph.node_features, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(graph.edge_features, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(graph.edge_list, dtype="<i8").tobytes())


def read_graph_bin(path) -> MatrixGraph:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise ValueError(f"not a graph container: {path}")
    off = len(_MAGIC)
    n_nodes, n_edges, d_node, d_edge, norm = struct.unpack_from("<4Qd", blob, off)
    off += struct.calcsize("<4Qd")

    def take(count, dtype):
        nonlocal off
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off)
        off += arr.nbytes
        return arr

    node_features = take(n_nodes * d_node, "<f8").reshape(n_nodes, d_node)
    edge_features = take(n_edges * d_edge, "<f8").reshape(n_edges, d_edge)
    edge_list = take(n_edges * 2, "<i8").reshape(n_edges, 2)
    if off != len(blob):
        raise ValueError("trailing bytes in graph container")
    return MatrixGraph(int(n_nodes), node_features, edge_list, edge_features, float(norm))
