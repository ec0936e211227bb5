"""Self-contained property checks backing the `verify` command.

Each check returns (name, passed, detail) and is independent of the
test suite, so a deployed installation can re-certify itself: solver
against dense Cholesky, autodiff against finite differences, loss
scale invariance in ulps, spectral similarity, the condition-number
bound fuzz, and Hutchinson consistency.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from .dense import dense_from_sparse, solve_spd, symmetric_eigen
from .gnn import GnnConfig, forward, init_model
from .graphfeat import build_graph
from .pcg import SolveConfig, pcg_solve
from .precond import build_fsai, build_ic0, build_identity, build_jacobi, build_learned_spai
from .sparse import SparseMatrix, mean_abs_nonzero_norm, spmv
from .spectral import condition_bound_check, preconditioned_spectrum
from .training import hutchinson_frobenius_estimate, sai_loss_on_tape

__all__ = ["ulp_distance", "run_verify", "rand_spd_sparse", "sample_bounded_triple"]


def _ordered_bits(x: float) -> int:
    (u,) = struct.unpack("<Q", struct.pack("<d", x))
    return (u ^ 0xFFFFFFFFFFFFFFFF) if (u >> 63) else (u | 0x8000000000000000)


def ulp_distance(a: float, b: float) -> int:
    """Count of representable doubles separating a and b (0 when equal)."""
    return abs(_ordered_bits(float(a)) - _ordered_bits(float(b)))


def rand_spd_sparse(n: int, rng, extra_per_row: int = 3) -> SparseMatrix:
    """Random symmetric strictly diagonally dominant sparse matrix."""
    entries = {}
    for _ in range(extra_per_row * n):
        i = int(rng.integers(n))
        j = int(rng.integers(n))
        if i == j:
            continue
        v = float(rng.uniform(-1.0, 1.0))
        entries[(i, j)] = v
        entries[(j, i)] = v
    row_abs = np.zeros(n)
    for (i, _), v in entries.items():
        row_abs[i] += abs(v)
    for i in range(n):
        entries[(i, i)] = row_abs[i] + 1.0 + float(rng.uniform(0.0, 1.0))
    keys = sorted(entries)
    return SparseMatrix.from_coo(
        n, n,
        np.array([k[0] for k in keys]),
        np.array([k[1] for k in keys]),
        np.array([entries[k] for k in keys]),
    )


def _random_lower_factor(A: SparseMatrix, rng, scale: float = 0.3) -> SparseMatrix:
    """Random values on the lower triangle of A's pattern (diagonal kept)."""
    rows = A.row_expand()
    keep = rows >= A.col_indices
    vals = np.where(
        rows == A.col_indices,
        rng.uniform(0.5, 1.0, A.nnz),
        rng.uniform(-1.0, 1.0, A.nnz),
    ) * scale
    return SparseMatrix.from_coo(
        A.n_rows, A.n_cols, rows[keep], A.col_indices[keep], vals[keep]
    )


def _tiny_model(seed: int, d_node: int = 2) -> tuple[GnnConfig, object]:
    cfg = GnnConfig(
        n_layers=2, hidden_dim=6, mlp_hidden_layers=1,
        activation="tanh", epsilon=1e-4, seed=seed, d_node=d_node,
    )
    return cfg, init_model(cfg)


def _loss_and_param_grad(model, graph, A, w, norm_kind="mean_abs_nonzero"):
    fwd = forward(model, graph)
    loss = sai_loss_on_tape(
        fwd.tape, A, fwd.g_values, fwd.G.pattern, model.config.epsilon, w, norm_kind
    )
    fwd.tape.backward(loss)
    grad = np.concatenate([
        (p.grad if p.grad is not None else np.zeros_like(p.value)).ravel()
        for p in fwd.param_vars
    ])
    return float(loss.value), grad


def check_solver_oracle(seed: int = 0):
    rng = np.random.default_rng(seed)
    worst_res, worst_err = 0.0, 0.0
    for _ in range(5):
        A = rand_spd_sparse(30, rng)
        b = rng.standard_normal(30)
        b /= np.linalg.norm(b)
        x_ref = solve_spd(dense_from_sparse(A), b)
        pres = [
            build_identity(A),
            build_jacobi(A),
            build_ic0(A),
            build_fsai(A),
            build_learned_spai(_random_lower_factor(A, rng), 1e-4),
        ]
        for M in pres:
            rep = pcg_solve(A, b, M, SolveConfig(rtol=1e-8))
            if not rep.converged:
                return False, f"{M.variant} failed to converge"
            res = np.linalg.norm(b - spmv(A, rep.x))
            err = np.linalg.norm(rep.x - x_ref) / np.linalg.norm(x_ref)
            worst_res = max(worst_res, res)
            worst_err = max(worst_err, err)
    ok = worst_res <= 1e-8 and worst_err <= 1e-6
    return ok, f"max residual {worst_res:.2e}, max error vs Cholesky {worst_err:.2e}"


def check_gradient_fd(seed: int = 0):
    rng = np.random.default_rng(seed + 1)
    A = rand_spd_sparse(6, rng)
    graph = build_graph(A)
    cfg, model = _tiny_model(int(seed))
    w = rng.standard_normal(6)
    p0 = model.params_flat()
    _, g = _loss_and_param_grad(model, graph, A, w)

    def loss_at(vec):
        model.set_params_flat(vec)
        fwd = forward(model, graph)
        tape = fwd.tape
        lv = sai_loss_on_tape(tape, A, fwd.g_values, fwd.G.pattern, cfg.epsilon, w)
        return float(lv.value)

    h = 1e-5
    worst = 0.0
    for _ in range(5):
        u = rng.standard_normal(len(p0))
        u /= np.linalg.norm(u)
        fd = (loss_at(p0 + h * u) - loss_at(p0 - h * u)) / (2 * h)
        du = float(g @ u)
        worst = max(worst, abs(fd - du) / max(abs(du), 1e-12))
    model.set_params_flat(p0)
    return worst < 1e-5, f"max relative gradient error {worst:.3e} over 5 direction probes"


def check_loss_scale_invariance(seed: int = 0):
    rng = np.random.default_rng(seed + 2)
    worst_ulps = 0
    worst_grad = 0.0
    for _ in range(10):
        A = rand_spd_sparse(8, rng)
        graph = build_graph(A)
        _, model = _tiny_model(int(seed))
        w = rng.standard_normal(8)
        loss0, g0 = _loss_and_param_grad(model, graph, A, w)
        g_scale = max(float(np.max(np.abs(g0))), 1e-300)
        for alpha in (1e-3, 1e3):
            As = A.with_values(A.values * alpha)
            loss_a, g_a = _loss_and_param_grad(model, graph, As, w)
            worst_ulps = max(worst_ulps, ulp_distance(loss0, loss_a))
            worst_grad = max(worst_grad, float(np.max(np.abs(g_a - g0))) / g_scale)
    ok = worst_ulps <= 4 and worst_grad <= 1e-12
    return ok, (
        f"max loss drift {worst_ulps} ulps, "
        f"max relative gradient drift {worst_grad:.2e}"
    )


def check_spectrum_similarity(seed: int = 0):
    rng = np.random.default_rng(seed + 3)
    A = rand_spd_sparse(20, rng)
    lam = preconditioned_spectrum(A, build_jacobi(A))
    Ad = dense_from_sparse(A)
    d = np.sqrt(np.diag(Ad))
    S = Ad / d[:, None] / d[None, :]
    lam_ref, _ = symmetric_eigen(S)
    worst = float(np.max(np.abs(lam - lam_ref)))
    return worst < 1e-8, f"max eigenvalue deviation {worst:.2e} vs similarity oracle"


def inverse_factor_with_jitter(A: SparseMatrix, rng, jitter: float) -> tuple[SparseMatrix, float]:
    """(G, eps) with GG^T + eps I near ||A|| A^{-1}, perturbed by jitter.

    With A = L L^T, the upper-triangular sqrt(||A||) L^{-T} satisfies
    GG^T = ||A|| A^{-1} exactly, so jitter dials sigma_max(E) smoothly
    upward from (nearly) zero.
    """
    from .dense import cholesky, solve_lower

    n = A.n_rows
    Ad = dense_from_sparse(A)
    norm = mean_abs_nonzero_norm(A)
    L = cholesky(Ad)
    inv_l = np.empty((n, n))
    basis = np.eye(n)
    for i in range(n):
        inv_l[:, i] = solve_lower(L, basis[i])
    G0 = math.sqrt(norm) * inv_l.T
    scale = float(np.mean(np.abs(np.diag(G0))))
    noise = np.triu(rng.standard_normal((n, n))) * jitter * scale
    eps = float(10.0 ** rng.uniform(-8, -5)) * norm
    return SparseMatrix.from_dense(G0 + noise), eps


def sample_bounded_triple(A: SparseMatrix, rng, jitter0: float = 0.3, max_halvings: int = 12):
    """Draw (G, eps, record) with sigma_max(E) < 1, halving jitter on rejection.

    Jitter 0 gives sigma near 0, so halving always terminates in practice;
    starting from a random jitter keeps coverage spread over (0, 1).
    """
    jitter = float(rng.uniform(0.0, jitter0))
    for _ in range(max_halvings):
        G, eps = inverse_factor_with_jitter(A, rng, jitter)
        rep = condition_bound_check(A, G, eps)
        if rep["sigma_max_E"] < 1.0:
            return G, eps, rep
        jitter *= 0.5
    raise RuntimeError("failed to draw a triple with sigma_max(E) < 1")


def check_condition_bound(seed: int = 0):
    rng = np.random.default_rng(seed + 4)
    violations = 0
    sigmas = []
    for _ in range(20):
        n = int(rng.integers(4, 13))
        A = rand_spd_sparse(n, rng)
        _, _, rep = sample_bounded_triple(A, rng)
        sigmas.append(rep["sigma_max_E"])
        if not rep["bound_holds"]:
            violations += 1
    ok = violations == 0
    return ok, (
        f"{len(sigmas)} triples with sigma<1 (max sigma {max(sigmas):.3f}), "
        f"{violations} bound violations"
    )


def check_hutchinson(seed: int = 0):
    rng = np.random.default_rng(seed + 5)
    A = rand_spd_sparse(10, rng)
    M = build_jacobi(A)
    Ad = dense_from_sparse(A)
    K = np.diag(1.0 / np.diag(Ad))
    E = Ad @ K - np.eye(10)
    oracle = float(np.sum(E * E))
    est = hutchinson_frobenius_estimate(A, M.apply, 20000, seed=int(seed))
    rel = abs(est - oracle) / oracle
    return rel < 0.1, f"estimate {est:.6f} vs oracle {oracle:.6f}, relative error {rel:.3%}"


CHECKS = (
    ("solver_cholesky_oracle", check_solver_oracle),
    ("gradient_finite_difference", check_gradient_fd),
    ("loss_scale_invariance", check_loss_scale_invariance),
    ("spectrum_similarity_oracle", check_spectrum_similarity),
    ("condition_bound_fuzz", check_condition_bound),
    ("hutchinson_consistency", check_hutchinson),
)


def run_verify(seed: int = 0):
    """Run every named check; a raising check reports as failed."""
    results = []
    for name, fn in CHECKS:
        try:
            passed, detail = fn(seed)
        except Exception as exc:  # a crash is a failure, not an abort
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, bool(passed), detail))
    return results
