"""
Training the learned sparse approximate inverse
===============================================

End-to-end miniature of the learning pipeline: generate a family of
variable-coefficient heat systems, train the message-passing model on
the scale-invariant residual loss, and compare PCG iteration counts of
the learned preconditioner against Jacobi on held-out instances.

Scaled down (10x10 grids, 300 epochs) to finish in about two minutes;
the full protocol lives in the acceptance suite and the command line.
"""

import numpy as np

from spaigraph.datasets import gen_poisson2d, gen_rhs, make_split
from spaigraph.gnn import GnnConfig, forward, init_model
from spaigraph.graphfeat import build_graph
from spaigraph.pcg import SolveConfig, pcg_solve
from spaigraph.precond import build_jacobi, build_learned_spai
from spaigraph.training import TrainConfig, TrainItem, train

problems = []
for seed in range(24):
    A, meta = gen_poisson2d(10, 10, coeff_seed=seed)
    problems.append((A, gen_rhs(meta, 1000 + seed), build_graph(A, meta)))
train_set, test_set = make_split(problems, ratio=(4, 1), seed=0)
print(f"{len(train_set)} training instances, {len(test_set)} held out")

model = init_model(GnnConfig(d_node=3))
items = [TrainItem(A, graph) for A, _, graph in train_set]
log = train(model, items, TrainConfig(epochs=300))
losses = log.losses()
print(f"epoch   1: mean loss {losses[0]:.4f}")
print(f"epoch {len(losses)}: mean loss {losses[-1]:.4f}")

cfg = SolveConfig(rtol=1e-8)
print(f"\n{'instance':>8}  {'k jacobi':>8}  {'k learned':>9}")
ratios = []
for idx, (A, b, graph) in enumerate(test_set):
    k_jac = pcg_solve(A, b, build_jacobi(A), cfg).k
    G = forward(model, graph).G
    k_learned = pcg_solve(A, b, build_learned_spai(G, model.config.epsilon), cfg).k
    ratios.append(k_learned / k_jac)
    print(f"{idx:>8}  {k_jac:>8}  {k_learned:>9}")
print(f"\nmean iteration ratio learned/jacobi: {np.mean(ratios):.3f}")
