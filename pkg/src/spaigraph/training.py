"""Training: scale-invariant loss, stochastic trace estimation, AdamW.

The loss never materializes A M^{-1}: with u = G(G^T w) + eps w it
computes z = (A u)/||A|| - w and returns ||z||^2, a single-sample
estimate of the squared Frobenius error of the normalized preconditioned
operator.  The matrix norm is switchable for ablation; the default is
the mean absolute stored entry, which makes the loss invariant under
A -> alpha A.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Var
from .gnn import GnnModel, forward, save_checkpoint
from .graphfeat import MatrixGraph
from .pcg import SolveConfig, pcg_solve
from .precond import build_learned_spai
from .sparse import SparseMatrix, SparsityPattern, mean_abs_nonzero_norm

__all__ = [
    "NORM_KINDS",
    "matrix_norm",
    "sai_loss",
    "sai_loss_on_tape",
    "hutchinson_frobenius_estimate",
    "adamw_step",
    "AdamWState",
    "TrainConfig",
    "TrainItem",
    "TrainingDivergedError",
    "train",
]

NORM_KINDS = ("mean_abs_nonzero", "frobenius", "entrywise_l1")


def matrix_norm(A: SparseMatrix, kind: str = "mean_abs_nonzero") -> float:
    """Positively homogeneous matrix norms over the stored entries."""
    if A.nnz == 0:
        raise ValueError("norm of a matrix with no stored entries")
    if kind == "mean_abs_nonzero":
        return mean_abs_nonzero_norm(A)
    if kind == "frobenius":
        return math.sqrt(math.fsum((A.values * A.values).tolist()))
    if kind == "entrywise_l1":
        return math.fsum(np.abs(A.values).tolist())
    raise ValueError(f"unknown norm kind {kind!r}, expected one of {NORM_KINDS}")


def sai_loss_on_tape(
    tape: Tape,
    A: SparseMatrix,
    g_values: Var,
    pattern: SparsityPattern,
    epsilon: float,
    w: np.ndarray,
    norm_kind: str = "mean_abs_nonzero",
) -> Var:
    """||(A(GG^T + eps I)w)/||A|| - w||^2 on an existing tape.

    The A side is evaluated in extended precision by a fused tape op,
    so the value drifts by at most a few ulps under A -> alpha A; the
    G side is untouched by that rescaling and needs no special care.
    """
    w = np.asarray(w, dtype=np.float64)
    if len(w) != A.n_rows:
        raise ValueError(f"probe vector has length {len(w)}, matrix is {A.n_rows}")
    if norm_kind not in NORM_KINDS:
        raise ValueError(f"unknown norm kind {norm_kind!r}, expected one of {NORM_KINDS}")
    w_var = tape.constant(w)
    gtw = tape.spmv_t_values(g_values, pattern, w_var)
    ggtw = tape.spmv_values(g_values, pattern, gtw)
    u = tape.add_const(ggtw, epsilon * w)
    return tape.normalized_residual_loss(A, u, w, norm_kind)


def sai_loss(
    A: SparseMatrix,
    G: SparseMatrix,
    epsilon: float,
    w: np.ndarray,
    norm_kind: str = "mean_abs_nonzero",
) -> float:
    """Standalone loss evaluation (same code path as the tape version)."""
    tape = Tape()
    g_values = tape.constant(G.values)
    return float(sai_loss_on_tape(tape, A, g_values, G.pattern, epsilon, w, norm_kind).value)


def hutchinson_frobenius_estimate(A: SparseMatrix, m_apply, n_samples: int, seed: int = 0) -> float:
    """Mean of ||A M^{-1} w - w||^2 over fresh standard-normal probes.

    Unbiased for ||A M^{-1} - I||_F^2.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    n = A.n_rows
    from .sparse import spmv

    samples = []
    for _ in range(n_samples):
        w = rng.standard_normal(n)
        z = spmv(A, m_apply(w)) - w
        samples.append(float(z @ z))
    return math.fsum(samples) / n_samples


@dataclass
class AdamWState:
    m: np.ndarray
    v: np.ndarray

    @staticmethod
    def zeros(n: int) -> "AdamWState":
        return AdamWState(np.zeros(n), np.zeros(n))


def adamw_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamWState,
    t: int,
    lr: float,
    weight_decay: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    """Decoupled-weight-decay Adam update; t is the 1-based step index.

    Returns the new parameters; the moment state is updated in place.
    """
    if t < 1:
        raise ValueError("step index is 1-based")
    state.m = beta1 * state.m + (1.0 - beta1) * grads
    state.v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = state.m / (1.0 - beta1**t)
    v_hat = state.v / (1.0 - beta2**t)
    return params - lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * params)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 4
    lr: float = 1e-3
    weight_decay: float = 1e-2
    lr_decay: float = 0.99
    hutchinson_samples_per_matrix: int = 1
    seed: int = 0
    norm_kind: str = "mean_abs_nonzero"
    val_every: int = 50
    checkpoint_every: int = 0

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.hutchinson_samples_per_matrix) < 1:
            raise ValueError("epochs, batch size, and sample counts must be positive")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ValueError("lr must be positive and weight decay nonnegative")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.norm_kind not in NORM_KINDS:
            raise ValueError(f"unknown norm kind {self.norm_kind!r}")


@dataclass
class TrainItem:
    A: SparseMatrix
    graph: MatrixGraph
    b: np.ndarray | None = None


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, loss: float, checkpoint_path):
        msg = f"non-finite loss {loss} at epoch {epoch}"
        if checkpoint_path is not None:
            msg += f"; last good parameters saved to {checkpoint_path}"
        super().__init__(msg)
        self.epoch = epoch
        self.loss = loss


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)  # (epoch, mean_loss, lr, wallclock_s, val_mean_k)

    def losses(self):
        return np.array([r[1] for r in self.rows])


def _grad_vector(param_vars) -> np.ndarray:
    chunks = []
    for v in param_vars:
        g = v.grad if v.grad is not None else np.zeros_like(v.value)
        chunks.append(np.asarray(g, dtype=np.float64).ravel())
    return np.concatenate(chunks)


def _matrix_loss_and_grad(model, item, rng, cfg) -> tuple[float, np.ndarray]:
    """Forward + loss (averaged over fresh probes) + backward for one matrix."""
    fwd = forward(model, item.graph)
    n = item.A.n_rows
    n_samples = cfg.hutchinson_samples_per_matrix
    losses = []
    for _ in range(n_samples):
        w = rng.standard_normal(n)
        losses.append(
            sai_loss_on_tape(
                fwd.tape, item.A, fwd.g_values, fwd.G.pattern,
                model.config.epsilon, w, cfg.norm_kind,
            )
        )
    total = losses[0]
    for lv in losses[1:]:
        total = fwd.tape.add(total, lv)
    mean_loss = fwd.tape.scale(total, 1.0 / n_samples)
    fwd.tape.backward(mean_loss)
    return float(mean_loss.value), _grad_vector(fwd.param_vars)


def _validation_mean_k(model, val_items) -> float:
    ks = []
    cfg = SolveConfig(rtol=1e-8)
    for item in val_items:
        fwd = forward(model, item.graph)
        pre = build_learned_spai(fwd.G, model.config.epsilon)
        b = item.b
        if b is None:
            b = np.ones(item.A.n_rows) / math.sqrt(item.A.n_rows)
        ks.append(pcg_solve(item.A, b, pre, cfg).k)
    return float(np.mean(ks))


def train(
    model: GnnModel,
    train_items,
    cfg: TrainConfig,
    val_items=(),
    log_path=None,
    checkpoint_path=None,
) -> TrainLog:
    """Seeded minibatch AdamW over the SAI loss.

    Per epoch: shuffle, iterate batches, draw one fresh probe per matrix
    per sample, average gradients over the batch, step, then decay the
    learning rate.  Aborts on non-finite loss, saving the last good
    parameters first when a checkpoint path is available.
    """
    train_items = list(train_items)
    if not train_items:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    params = model.params_flat()
    state = AdamWState.zeros(len(params))
    lr = cfg.lr
    t = 0
    log = TrainLog()
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "lr", "wallclock_s", "val_mean_k"])
    t0 = time.perf_counter()
    last_good = params.copy()
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(train_items))
            epoch_losses = []
            for start in range(0, len(order), cfg.batch_size):
                batch = order[start : start + cfg.batch_size]
                grad_sum = np.zeros_like(params)
                for idx in batch:
                    loss_val, grad = _matrix_loss_and_grad(model, train_items[idx], rng, cfg)
                    if not math.isfinite(loss_val):
                        if checkpoint_path is not None:
                            model.set_params_flat(last_good)
                            save_checkpoint(model, checkpoint_path)
                        raise TrainingDivergedError(epoch, loss_val, checkpoint_path)
                    epoch_losses.append(loss_val)
                    grad_sum += grad
                t += 1
                params = adamw_step(params, grad_sum / len(batch), state, t, lr, cfg.weight_decay)
                model.set_params_flat(params)
            val_k = ""
            if val_items and cfg.val_every > 0 and (epoch % cfg.val_every == 0 or epoch == cfg.epochs):
                val_k = _validation_mean_k(model, val_items)
            row = (epoch, float(np.mean(epoch_losses)), lr, time.perf_counter() - t0, val_k)
            log.rows.append(row)
            if writer is not None:
                writer.writerow(row)
                fh.flush()
            if (
                checkpoint_path is not None
                and cfg.checkpoint_every > 0
                and epoch % cfg.checkpoint_every == 0
            ):
                save_checkpoint(model, checkpoint_path)
            last_good = params.copy()
            lr *= cfg.lr_decay
    finally:
        if fh is not None:
            fh.close()
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path)
    return log
