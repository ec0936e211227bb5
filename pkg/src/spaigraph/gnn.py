"""Encoder-processor-decoder message passing network producing G.

Node and edge features are encoded into hidden states, L rounds of
message passing refine them with residual updates, and a decoder maps
each edge's hidden state to the scalar G_ij placed at that edge's
position in the sparsity pattern.  All arithmetic runs through the
differentiation tape so the training loss can backpropagate to every
weight.

Message inputs follow the update equations literally: f_m consumes the
raw encoded edge feature e_ij each round, not the evolving hidden edge
state; the alternative wiring is available behind
``message_uses_hidden_edge`` for ablation.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Var
from .graphfeat import MatrixGraph
from .sparse import SparseMatrix, SparsityPattern

__all__ = [
    "GnnConfig",
    "Mlp",
    "GnnModel",
    "ForwardResult",
    "init_model",
    "forward",
    "assemble_G",
    "pattern_from_edges",
    "save_checkpoint",
    "load_checkpoint",
]

logger = logging.getLogger(__name__)

_MAGIC = b"SPAIGNN\x01"
_ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class GnnConfig:
    """Architecture knobs; defaults give roughly 23k parameters.

    n_layers = 0 is permitted as a degenerate encoder+decoder pipeline
    (useful for composition tests); real models use n_layers >= 1.
    """

    n_layers: int = 4
    hidden_dim: int = 24
    mlp_hidden_layers: int = 1
    activation: str = "relu"
    epsilon: float = 1e-4
    seed: int = 0
    d_node: int = 2
    d_edge: int = 1
    message_uses_hidden_edge: bool = False

    def __post_init__(self):
        if self.n_layers < 0:
            raise ValueError("n_layers must be nonnegative")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be at least 1")
        if self.mlp_hidden_layers < 0:
            raise ValueError("mlp_hidden_layers must be nonnegative")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.d_node < 1 or self.d_edge < 1:
            raise ValueError("feature dimensions must be at least 1")


@dataclass
class Mlp:
    """Affine layers with the configured activation between them."""

    weights: list = field(default_factory=list)  # [(W, b), ...]

    @property
    def d_in(self):
        return self.weights[0][0].shape[0]

    @property
    def d_out(self):
        return self.weights[-1][0].shape[1]

    def n_params(self):
        return sum(W.size + b.size for W, b in self.weights)


def _init_mlp(dims, rng) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    weights = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (d_in + d_out))
        W = rng.uniform(-bound, bound, size=(d_in, d_out))
        b = np.zeros(d_out)
        weights.append((W, b))
    return Mlp(weights)


class GnnModel:
    """Parameter container; mlps() yields them in declaration order:
    node encoder, edge encoder, per-layer (f_m, f_v, f_e), decoder."""

    def __init__(self, config: GnnConfig, e_n: Mlp, e_e: Mlp, layers, decoder: Mlp):
        self.config = config
        self.e_n = e_n
        self.e_e = e_e
        self.layers = layers
        self.decoder = decoder
        self.n_params = sum(m.n_params() for m in self.mlps())

    def mlps(self):
        yield self.e_n
        yield self.e_e
        for f_m, f_v, f_e in self.layers:
            yield f_m
            yield f_v
            yield f_e
        yield self.decoder

    def params_flat(self) -> np.ndarray:
        chunks = []
        for mlp in self.mlps():
            for W, b in mlp.weights:
                chunks.append(W.ravel())
                chunks.append(b)
        return np.concatenate(chunks)

    def set_params_flat(self, vec: np.ndarray):
        vec = np.asarray(vec, dtype=np.float64)
        if len(vec) != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {len(vec)}")
        pos = 0
        for mlp in self.mlps():
            for idx, (W, b) in enumerate(mlp.weights):
                W_new = vec[pos : pos + W.size].reshape(W.shape).copy()
                pos += W.size
                b_new = vec[pos : pos + b.size].copy()
                pos += b.size
                mlp.weights[idx] = (W_new, b_new)


def _mlp_dims(cfg: GnnConfig, d_in: int, d_out: int):
    return [d_in] + [cfg.hidden_dim] * cfg.mlp_hidden_layers + [d_out]


def init_model(cfg: GnnConfig) -> GnnModel:
    """Seeded Glorot initialization in fixed declaration order."""
    rng = np.random.default_rng(cfg.seed)
    d = cfg.hidden_dim
    msg_edge_dim = d if cfg.message_uses_hidden_edge else cfg.d_edge
    e_n = _init_mlp(_mlp_dims(cfg, cfg.d_node, d), rng)
    e_e = _init_mlp(_mlp_dims(cfg, cfg.d_edge, d), rng)
    layers = []
    for _ in range(cfg.n_layers):
        f_m = _init_mlp(_mlp_dims(cfg, 2 * d + msg_edge_dim, d), rng)
        f_v = _init_mlp(_mlp_dims(cfg, d, d), rng)
        f_e = _init_mlp(_mlp_dims(cfg, 3 * d, d), rng)
        layers.append((f_m, f_v, f_e))
    decoder = _init_mlp(_mlp_dims(cfg, d, 1), rng)
    model = GnnModel(cfg, e_n, e_e, layers, decoder)
    logger.info("initialized model with %d parameters", model.n_params)
    return model


@dataclass
class ForwardResult:
    """One differentiable pass: the assembled factor, its tape, the edge
    value Var (for building a loss on the same tape), and the parameter
    Vars in declaration order (for reading gradients)."""

    G: SparseMatrix
    tape: Tape
    g_values: Var
    param_vars: list


def pattern_from_edges(n_nodes: int, edge_list: np.ndarray) -> SparsityPattern:
    """Rebuild the CSR pattern from an edge list in CSR order."""
    rows = edge_list[:, 0]
    if np.any(rows[1:] < rows[:-1]):
        raise ValueError("edge list is not in CSR order")
    offsets = np.zeros(n_nodes + 1, dtype=np.int64)
    np.add.at(offsets, rows + 1, 1)
    np.cumsum(offsets, out=offsets)
    return SparsityPattern(n_nodes, n_nodes, offsets, edge_list[:, 1].copy())


def _apply_mlp(tape: Tape, weight_vars, x: Var, activation: str) -> Var:
    act = tape.relu if activation == "relu" else tape.tanh
    h = x
    for k, (Wv, bv) in enumerate(weight_vars):
        h = tape.add_bias(tape.matmul(h, Wv), bv)
        if k < len(weight_vars) - 1:
            h = act(h)
    return h


def forward(model: GnnModel, graph: MatrixGraph) -> ForwardResult:
    """Run the network on a graph; every weight enters the tape as a leaf."""
    cfg = model.config
    if graph.d_node != cfg.d_node:
        raise ValueError(f"graph has d_node={graph.d_node}, model expects {cfg.d_node}")
    if graph.d_edge != cfg.d_edge:
        raise ValueError(f"graph has d_edge={graph.d_edge}, model expects {cfg.d_edge}")
    tape = Tape()
    param_vars = []
    mlp_vars = []
    for mlp in model.mlps():
        wv = []
        for W, b in mlp.weights:
            Wv, bv = tape.leaf(W), tape.leaf(b)
            param_vars.extend((Wv, bv))
            wv.append((Wv, bv))
        mlp_vars.append(wv)
    it = iter(mlp_vars)
    e_n_vars, e_e_vars = next(it), next(it)
    layer_vars = [(next(it), next(it), next(it)) for _ in range(cfg.n_layers)]
    dec_vars = next(it)

    pattern = pattern_from_edges(graph.n_nodes, graph.edge_list)
    rows = graph.edge_list[:, 0]
    cols = graph.edge_list[:, 1]

    V = tape.constant(graph.node_features)
    E_raw = tape.constant(graph.edge_features)
    X = _apply_mlp(tape, e_n_vars, V, cfg.activation)
    H = _apply_mlp(tape, e_e_vars, E_raw, cfg.activation)

    for f_m_vars, f_v_vars, f_e_vars in layer_vars:
        xi = tape.gather(X, rows)
        xj = tape.gather(X, cols)
        edge_in = H if cfg.message_uses_hidden_edge else E_raw
        msg = _apply_mlp(tape, f_m_vars, tape.concat([xi, xj, edge_in]), cfg.activation)
        m = tape.segment_sum(msg, pattern.row_offsets, graph.n_nodes)
        X = tape.add(X, _apply_mlp(tape, f_v_vars, m, cfg.activation))
        xi = tape.gather(X, rows)
        xj = tape.gather(X, cols)
        H = tape.add(H, _apply_mlp(tape, f_e_vars, tape.concat([xi, xj, H]), cfg.activation))

    decoded = _apply_mlp(tape, dec_vars, H, cfg.activation)
    g_values = tape.reshape(decoded, (graph.n_edges,))
    G = assemble_G(g_values.value, pattern)
    return ForwardResult(G, tape, g_values, param_vars)


def assemble_G(edge_values: np.ndarray, pattern: SparsityPattern) -> SparseMatrix:
    """Positional scatter of edge outputs into the pattern's CSR slots."""
    edge_values = np.asarray(edge_values, dtype=np.float64)
    if len(edge_values) != pattern.nnz:
        raise ValueError("one value per stored entry required")
    return SparseMatrix(
        pattern.n_rows,
        pattern.n_cols,
        pattern.row_offsets,
        pattern.col_indices,
        edge_values.copy(),
    )


def save_checkpoint(model: GnnModel, path):
    """Versioned binary container: config header then parameters in
    declaration order, f64 little-endian."""
    cfg = model.config
    header = struct.pack(
        "<8qd",
        cfg.n_layers,
        cfg.hidden_dim,
        cfg.mlp_hidden_layers,
        _ACTIVATIONS.index(cfg.activation),
        cfg.d_node,
        cfg.d_edge,
        1 if cfg.message_uses_hidden_edge else 0,
        int(cfg.seed),
        cfg.epsilon,
    )
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(header)
        fh.write(np.ascontiguousarray(model.params_flat(), dtype="<f8").tobytes())


def load_checkpoint(path) -> GnnModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise ValueError(f"not a model checkpoint: {path}")
    off = len(_MAGIC)
    fields = struct.unpack_from("<8qd", blob, off)
    off += struct.calcsize("<8qd")
    n_layers, hidden_dim, mlp_hidden, act_id, d_node, d_edge, msg_flag, seed, epsilon = fields
    cfg = GnnConfig(
        n_layers=int(n_layers),
        hidden_dim=int(hidden_dim),
        mlp_hidden_layers=int(mlp_hidden),
        activation=_ACTIVATIONS[int(act_id)],
        epsilon=float(epsilon),
        seed=int(seed),
        d_node=int(d_node),
        d_edge=int(d_edge),
        message_uses_hidden_edge=bool(msg_flag),
    )
    model = init_model(cfg)
    params = np.frombuffer(blob, dtype="<f8", offset=off)
    if len(params) != model.n_params:
        raise ValueError(
            f"checkpoint holds {len(params)} parameters, config implies {model.n_params}"
        )
    model.set_params_flat(params)
    return model
