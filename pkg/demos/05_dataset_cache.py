"""
Problem generation and the on-disk cache
========================================

Generates one instance of each matrix family, saves it in the cache
layout (Matrix Market matrix, JSON metadata, binary rhs and graph),
reloads everything, and verifies the round trip is exact.
"""

import tempfile
from pathlib import Path

import numpy as np

from spaigraph.datasets import (
    gen_poisson2d,
    gen_rhs,
    gen_synthetic,
    load_problem,
    save_problem,
)
from spaigraph.graphfeat import build_graph

root = Path(tempfile.mkdtemp()) / "cache"

instances = []
A, meta = gen_poisson2d(8, 8)
instances.append((0, A, meta))
A, meta = gen_poisson2d(8, 8, coeff_seed=4)
instances.append((4, A, meta))
A, meta = gen_synthetic(n=96, density=0.02, seed=9)
instances.append((9, A, meta))

for seed, A, meta in instances:
    b = gen_rhs(meta, seed)
    graph = build_graph(A, meta)
    save_problem(root, seed, A, meta, b, graph=graph)
    print(f"saved {meta.family}/{seed}: n = {meta.n}, nnz = {A.nnz}, d_node = {graph.d_node}")

print()
for seed, A_orig, meta_orig in instances:
    A, meta, b, graph = load_problem(root, meta_orig.family, seed)
    exact = (
        np.array_equal(A.values, A_orig.values)
        and np.array_equal(A.col_indices, A_orig.col_indices)
        and abs(np.linalg.norm(b) - 1.0) < 1e-12
    )
    print(f"reloaded {meta.family}/{seed}: values bit-exact = {exact}")

files = sorted(p.relative_to(root).as_posix() for p in root.rglob("*") if p.is_file())
print("\ncache layout:")
for f in files:
    print(f"  {f}")
