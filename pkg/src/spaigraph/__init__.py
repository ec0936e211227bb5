"""Sparse approximate inverse preconditioning for conjugate gradient solvers.

A self-contained numpy toolkit: CSR sparse kernels, a preconditioned CG
solver, classical preconditioners (Jacobi, zero-fill incomplete Cholesky,
factorized sparse approximate inverse), and a learned variant whose sparse
factor is produced by a small message-passing graph network trained with
a matrix-free scale-invariant loss.

Exports resolve lazily so that `import spaigraph` stays cheap and the
command-line entry point can pin BLAS thread counts before numpy loads.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "SparseMatrix": "sparse",
    "SparsityPattern": "sparse",
    "mean_abs_nonzero_norm": "sparse",
    "read_matrix_market": "sparse",
    "write_matrix_market": "sparse",
    "spmv": "sparse",
    "spmv_transpose": "sparse",
    "DENSE_GUARD": "dense",
    "NotPositiveDefiniteError": "dense",
    "cholesky": "dense",
    "dense_from_sparse": "dense",
    "solve_spd": "dense",
    "spectral_norm": "dense",
    "symmetric_eigen": "dense",
    "Preconditioner": "precond",
    "IdentityPreconditioner": "precond",
    "JacobiPreconditioner": "precond",
    "IC0Preconditioner": "precond",
    "FsaiPreconditioner": "precond",
    "LearnedSpaiPreconditioner": "precond",
    "build_identity": "precond",
    "build_jacobi": "precond",
    "build_ic0": "precond",
    "build_fsai": "precond",
    "build_learned_spai": "precond",
    "NotSpdError": "pcg",
    "SolveConfig": "pcg",
    "SolveReport": "pcg",
    "pcg_solve": "pcg",
    "verify_spd_symmetric": "pcg",
    "Tape": "autodiff",
    "Var": "autodiff",
    "MatrixGraph": "graphfeat",
    "build_graph": "graphfeat",
    "read_graph_bin": "graphfeat",
    "write_graph_bin": "graphfeat",
    "GnnConfig": "gnn",
    "GnnModel": "gnn",
    "init_model": "gnn",
    "forward": "gnn",
    "save_checkpoint": "gnn",
    "load_checkpoint": "gnn",
    "AdamWState": "training",
    "TrainConfig": "training",
    "TrainItem": "training",
    "TrainingDivergedError": "training",
    "adamw_step": "training",
    "hutchinson_frobenius_estimate": "training",
    "sai_loss": "training",
    "train": "training",
    "ProblemMeta": "datasets",
    "gen_poisson2d": "datasets",
    "gen_synthetic": "datasets",
    "make_split": "datasets",
    "gen_rhs": "datasets",
    "save_problem": "datasets",
    "load_problem": "datasets",
    "preconditioned_spectrum": "spectral",
    "condition_number": "spectral",
    "kaporin_number": "spectral",
    "condition_bound_check": "spectral",
    "spectral_record": "spectral",
    "run_verify": "verify",
    "ulp_distance": "verify",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    if name in _EXPORTS:
        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        value = getattr(module, name)
        globals()[name] = value
        return value
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(_EXPORTS))
