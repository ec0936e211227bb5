"""Network construction, forward semantics, and checkpoint tests.

The composition oracles re-apply the stored weight matrices with plain
numpy; equivariance and receptive-field claims are checked by
permute-and-compare and feature-masking harnesses.
"""

import numpy as np
import pytest

from conftest import rand_sparse_spd
from spaigraph.dense import dense_from_sparse
from spaigraph.gnn import (
    GnnConfig,
    assemble_G,
    forward,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from spaigraph.graphfeat import MatrixGraph, build_graph
from spaigraph.sparse import SparseMatrix


def numpy_mlp(mlp, x, activation="relu"):
    """Reference MLP application: affine layers, activation between."""
    act = (lambda v: np.maximum(v, 0.0)) if activation == "relu" else np.tanh
    h = np.asarray(x, dtype=np.float64)
    for k, (W, b) in enumerate(mlp.weights):
        h = h @ W + b
        if k < len(mlp.weights) - 1:
            h = act(h)
    return h


def small_cfg(seed=0, **kw):
    base = dict(n_layers=2, hidden_dim=6, d_node=2, seed=seed)
    base.update(kw)
    return GnnConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        GnnConfig(n_layers=-1)
    with pytest.raises(ValueError):
        GnnConfig(hidden_dim=0)
    with pytest.raises(ValueError):
        GnnConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        GnnConfig(activation="gelu")


def test_default_parameter_count_in_documented_window():
    model = init_model(GnnConfig(seed=0))
    assert 19200 <= model.n_params <= 28800
    assert model.n_params == 23353  # regression pin for the default config
    model3 = init_model(GnnConfig(seed=0, d_node=3))
    assert 19200 <= model3.n_params <= 28800


def test_init_is_glorot_uniform_with_zero_biases():
    model = init_model(small_cfg(seed=4))
    for mlp in model.mlps():
        for W, b in mlp.weights:
            bound = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
            assert np.abs(W).max() <= bound
            assert np.abs(W).max() > 0.1 * bound  # not degenerate
            assert np.array_equal(b, np.zeros_like(b))


def test_same_seed_same_graph_bit_identical_G():
    rng = np.random.default_rng(7)
    A = rand_sparse_spd(12, rng)
    graph = build_graph(A)
    g1 = forward(init_model(small_cfg(seed=3)), graph).G
    g2 = forward(init_model(small_cfg(seed=3)), graph).G
    assert np.array_equal(g1.values, g2.values)
    g3 = forward(init_model(small_cfg(seed=4)), graph).G
    assert not np.array_equal(g1.values, g3.values)


def test_zero_layer_model_composes_encoder_and_decoder():
    """With L = 0 the network is G_kl = D(E_e(e_kl)) edge by edge."""
    rng = np.random.default_rng(9)
    A = rand_sparse_spd(8, rng)
    graph = build_graph(A)
    model = init_model(small_cfg(seed=5, n_layers=0))
    G = forward(model, graph).G

    hidden = numpy_mlp(model.e_e, graph.edge_features)
    want = numpy_mlp(model.decoder, hidden)[:, 0]
    assert np.allclose(G.values, want, rtol=1e-13, atol=1e-14)


def test_forward_output_has_matrix_pattern():
    rng = np.random.default_rng(10)
    A = rand_sparse_spd(9, rng)
    graph = build_graph(A)
    G = forward(init_model(small_cfg(seed=1)), graph).G
    assert np.array_equal(G.row_offsets, A.row_offsets)
    assert np.array_equal(G.col_indices, A.col_indices)


def test_permutation_equivariance():
    """Relabeling nodes relabels G the same way, within 1e-12."""
    rng = np.random.default_rng(13)
    A = rand_sparse_spd(10, rng)
    Ad = dense_from_sparse(A)
    perm = rng.permutation(10)
    P = np.zeros((10, 10))
    P[perm, np.arange(10)] = 1.0
    Ap = SparseMatrix.from_dense(P @ Ad @ P.T, keep=(P @ (Ad != 0) @ P.T) > 0)

    model = init_model(small_cfg(seed=6))
    G = dense_from_sparse(forward(model, build_graph(A)).G)
    Gp = dense_from_sparse(forward(model, build_graph(Ap)).G)
    assert np.abs(Gp - P @ G @ P.T).max() < 1e-12


def path_graph_features(n, node_feats):
    """Path graph with self-loops as a MatrixGraph with given node features."""
    rows, cols = [], []
    for i in range(n):
        for j in (i - 1, i, i + 1):
            if 0 <= j < n:
                rows.append(i)
                cols.append(j)
    vals = np.ones(len(rows))
    A = SparseMatrix.from_coo(n, n, rows, cols, vals)
    edge_list = np.stack([A.row_expand(), A.col_indices], axis=1)
    edge_features = A.values[:, None]
    return A, MatrixGraph(n, np.asarray(node_feats, dtype=np.float64), edge_list, edge_features, 1.0)


def test_receptive_field_is_two_hops_at_one_layer():
    """At L = 1 an edge (i, j) sees node features within distance 1 of i and j.

    On a 6-node path, row 0's outputs cover edges (0,0) and (0,1), whose
    inputs reach no further than node 2.  Zeroing features of nodes at
    distance > 2 from node 0 must leave row 0 unchanged; zeroing node 2
    as well must change it.
    """
    rng = np.random.default_rng(17)
    feats = rng.standard_normal((6, 2))
    A, graph = path_graph_features(6, feats)
    model = init_model(small_cfg(seed=8, n_layers=1))
    base = forward(model, graph).G

    far = feats.copy()
    far[3:] = 0.0  # distance > 2 from node 0
    _, masked = path_graph_features(6, far)
    G_far = forward(model, masked).G
    row0 = slice(A.row_offsets[0], A.row_offsets[1])
    assert np.array_equal(G_far.values[row0], base.values[row0])

    near = feats.copy()
    near[2:] = 0.0  # node 2 is inside the receptive field of edge (0,1)
    _, masked2 = path_graph_features(6, near)
    G_near = forward(model, masked2).G
    assert not np.array_equal(G_near.values[row0], base.values[row0])


def test_residual_structure_with_zeroed_update_mlps():
    """Forcing f_v and f_e output layers to zero keeps x and h at their
    encoder values, so G equals the zero-layer composition exactly."""
    rng = np.random.default_rng(19)
    A = rand_sparse_spd(7, rng)
    graph = build_graph(A)
    model = init_model(small_cfg(seed=9, n_layers=3))
    for _, f_v, f_e in model.layers:
        for mlp in (f_v, f_e):
            W, b = mlp.weights[-1]
            mlp.weights[-1] = (np.zeros_like(W), b)

    G = forward(model, graph).G
    hidden = numpy_mlp(model.e_e, graph.edge_features)
    want = numpy_mlp(model.decoder, hidden)[:, 0]
    assert np.array_equal(G.values, want)


def test_assemble_G_positional_scatter():
    rng = np.random.default_rng(21)
    A = rand_sparse_spd(6, rng)
    vals = rng.standard_normal(A.nnz)
    G = assemble_G(vals, A.pattern)
    assert np.array_equal(G.values, vals)
    with pytest.raises(ValueError):
        assemble_G(vals[:-1], A.pattern)


def test_forward_rejects_feature_dim_mismatch():
    rng = np.random.default_rng(23)
    A = rand_sparse_spd(5, rng)
    graph = build_graph(A)  # d_node = 2
    model = init_model(small_cfg(seed=2, d_node=3))
    with pytest.raises(ValueError):
        forward(model, graph)


def test_checkpoint_round_trip_bit_exact(tmp_path):
    model = init_model(GnnConfig(seed=11, n_layers=3, hidden_dim=10, d_node=3,
                                 activation="tanh", message_uses_hidden_edge=True))
    path = tmp_path / "model.bin"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert back.config == model.config
    assert np.array_equal(back.params_flat(), model.params_flat())


def test_checkpoint_rejects_corrupt_file(tmp_path):
    model = init_model(small_cfg(seed=1))
    path = tmp_path / "model.bin"
    save_checkpoint(model, path)
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    bad = tmp_path / "bad.bin"
    bad.write_bytes(bytes(raw))
    with pytest.raises(ValueError):
        load_checkpoint(bad)
    truncated = tmp_path / "short.bin"
    truncated.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(ValueError):
        load_checkpoint(truncated)
