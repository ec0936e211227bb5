"""Problem-generator, split, and cache tests.

Stencil rows and eigenvalues come from closed-form oracles; SPD claims
go through dense Cholesky; the synthetic density figure is compared
against its documented target band.
"""

import numpy as np
import pytest

from spaigraph.datasets import (
    COEFF_HI,
    COEFF_LO,
    SYNTHETIC_EPS,
    ProblemMeta,
    gen_poisson2d,
    gen_rhs,
    gen_synthetic,
    load_problem,
    make_split,
    read_rhs_vec,
    save_problem,
    write_rhs_vec,
)
from spaigraph.dense import dense_from_sparse


def test_poisson_3x3_center_row_is_scaled_stencil():
    """Unit coefficient: the center node's row is (4, -1, -1, -1, -1)/h^2.

    On a 3x3 interior grid h = 1/4, so the stored values are 64 and -16,
    both exactly representable.
    """
    A, meta = gen_poisson2d(3, 3)
    assert meta.family == "poisson2d"
    dense = dense_from_sparse(A)
    center = 4  # node (1,1)
    row = dense[center]
    assert row[center] == 64.0
    for j in (1, 3, 5, 7):
        assert row[j] == -16.0
    assert row[0] == row[2] == row[6] == row[8] == 0.0


def test_poisson_values_and_pattern_symmetric_exactly():
    for kwargs in (dict(nx=5, ny=4), dict(nx=4, ny=6, coeff_seed=3)):
        A, _ = gen_poisson2d(**kwargs)
        dense = dense_from_sparse(A)
        assert np.array_equal(dense, dense.T)


def test_poisson_16x16_matches_analytic_eigenvalues():
    """Constant-coefficient eigenvalues: 4(sin^2(pi h i/2)+sin^2(pi h j/2))/h^2."""
    A, _ = gen_poisson2d(16, 16)
    h = 1.0 / 17
    i = np.arange(1, 17)
    lam_1d = 4.0 * np.sin(np.pi * h * i / 2.0) ** 2 / h**2
    want = np.sort((lam_1d[:, None] + lam_1d[None, :]).ravel())
    got = np.sort(np.linalg.eigvalsh(dense_from_sparse(A)))
    assert np.abs(got - want).max() < 1e-8


def test_heat_family_coefficients_in_declared_range():
    A, meta = gen_poisson2d(8, 8, coeff_seed=5)
    assert meta.family == "heat2d"
    coeff = np.asarray(meta.coeff)
    assert coeff.shape == (64,)
    assert (coeff >= COEFF_LO).all() and (coeff <= COEFF_HI).all()
    # log-uniform spread: both halves of the log-range get visits
    mid = np.sqrt(COEFF_LO * COEFF_HI)
    assert (coeff < mid).any() and (coeff > mid).any()


def test_heat_generation_is_deterministic():
    A1, m1 = gen_poisson2d(6, 6, coeff_seed=42)
    A2, m2 = gen_poisson2d(6, 6, coeff_seed=42)
    assert np.array_equal(A1.values, A2.values)
    assert np.array_equal(np.asarray(m1.coeff), np.asarray(m2.coeff))
    A3, _ = gen_poisson2d(6, 6, coeff_seed=43)
    assert not np.array_equal(A1.values, A3.values)


def test_generated_families_pass_cholesky():
    for A in (
        gen_poisson2d(7, 5)[0],
        gen_poisson2d(6, 6, coeff_seed=1)[0],
        gen_synthetic(50, 0.05, seed=2)[0],
    ):
        np.linalg.cholesky(dense_from_sparse(A))  # raises if not SPD


def test_synthetic_zero_density_is_eps_identity():
    A, meta = gen_synthetic(10, 0.0, seed=0)
    assert np.array_equal(dense_from_sparse(A), SYNTHETIC_EPS * np.eye(10))
    assert meta.epsilon_reg == SYNTHETIC_EPS


def test_synthetic_density_lands_in_documented_band():
    """Requested 3e-4 on P at n=1024: A's density within 8x of 1.2e-3."""
    A, meta = gen_synthetic(1024, 3e-4, seed=7)
    density = A.nnz / (1024 * 1024)
    assert meta.result_density == pytest.approx(density)
    assert 1.2e-3 / 8 <= density <= 1.2e-3 * 8


def test_make_split_ratio_and_determinism():
    items = list(range(50))
    train, test = make_split(items, ratio=(4, 1), seed=11)
    assert len(train) == 40 and len(test) == 10
    assert set(train) | set(test) == set(items)
    assert set(train) & set(test) == set()
    train2, test2 = make_split(items, ratio=(4, 1), seed=11)
    assert train == train2 and test == test2
    train3, _ = make_split(items, ratio=(4, 1), seed=12)
    assert train != train3
    with pytest.raises(ValueError):
        make_split(items, ratio=(4, 0))


def test_gen_rhs_unit_norm_deterministic():
    meta = ProblemMeta(family="synthetic", n=37)
    b = gen_rhs(meta, seed=3)
    assert np.linalg.norm(b) == pytest.approx(1.0, abs=1e-14)
    assert np.array_equal(b, gen_rhs(meta, seed=3))
    assert not np.array_equal(b, gen_rhs(meta, seed=4))


def test_rhs_vec_round_trip(tmp_path):
    b = np.random.default_rng(0).standard_normal(17)
    path = tmp_path / "rhs.vec"
    write_rhs_vec(b, path)
    assert np.array_equal(read_rhs_vec(path), b)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        read_rhs_vec(path)


def test_problem_cache_round_trip(tmp_path):
    A, meta = gen_poisson2d(5, 5, coeff_seed=9)
    b = gen_rhs(meta, seed=9)
    d = save_problem(tmp_path, 9, A, meta, b)
    assert sorted(p.name for p in d.iterdir()) == [
        "graph.bin", "matrix.mtx", "meta.json", "rhs.vec",
    ]
    A2, meta2, b2, graph2 = load_problem(tmp_path, "heat2d", 9)
    assert np.array_equal(A2.values, A.values)
    assert np.array_equal(A2.col_indices, A.col_indices)
    assert np.array_equal(b2, b)
    assert meta2.family == meta.family and meta2.n == meta.n
    assert np.allclose(np.asarray(meta2.coeff), np.asarray(meta.coeff), rtol=0, atol=0)
    assert graph2.n_nodes == 25 and graph2.d_node == 3
