"""Command-line front end: generate | train | bench | spectral | verify.

Every run is driven by a JSON config merged over documented defaults,
with --seed/--out/--threads taking final precedence.  Thread pinning
must happen before numpy is first imported, which is why this module
defers all heavy imports into the command bodies (the package __init__
is lazy for the same reason).

Exit codes: 0 success, 1 error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import sys
from pathlib import Path

RHS_SEED_OFFSET = 10**6

DEFAULTS = {
    "seed": 0,
    "out": "out",
    "threads": 1,
    "generate": {
        "root": None,  # default <out>/data
        "family": "heat2d",  # poisson2d | heat2d | synthetic
        "count": 50,
        "nx": 16,
        "ny": 16,
        "n": 256,  # synthetic only
        "density": 3e-4,  # synthetic only
    },
    "train": {
        "root": None,
        "family": "heat2d",
        "count": 50,
        "split_ratio": [4, 1],
        "split_seed": 0,
        "epochs": 500,
        "batch_size": 4,
        "lr": 1e-3,
        "weight_decay": 1e-2,
        "lr_decay": 0.99,
        "hutchinson_samples_per_matrix": 1,
        "norm_kind": "mean_abs_nonzero",
        "val_every": 50,
        "n_layers": 4,
        "hidden_dim": 24,
        "mlp_hidden_layers": 1,
        "activation": "relu",
        "epsilon": 1e-4,
        "message_uses_hidden_edge": False,
    },
    "bench": {
        "root": None,
        "family": "heat2d",
        "count": 50,
        "use_test_split": True,
        "split_ratio": [4, 1],
        "split_seed": 0,
        "preconditioners": ["none", "diag", "ic0", "fsai", "learned"],
        "rtols": [1e-2, 1e-4, 1e-6, 1e-8],
        "checkpoint": None,  # default <out>/checkpoint.bin
        "max_iters": None,
        "workers": 1,
    },
    "spectral": {
        "root": None,
        "family": "heat2d",
        "count": 50,
        "use_test_split": True,
        "split_ratio": [4, 1],
        "split_seed": 0,
        "preconditioners": ["diag", "ic0", "fsai", "learned"],
        "checkpoint": None,
    },
    "verify": {},
}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; reserve 2 for verify failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config is not None:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise ValueError("config file must hold a JSON object")
        cfg = _deep_merge(cfg, file_cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
    if args.threads is not None:
        cfg["threads"] = args.threads
    return cfg


def _pin_threads(n: int):
    for var in (
        "OPENBLAS_NUM_THREADS",
        "OMP_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ[var] = str(n)


def _data_root(cfg: dict, section: str) -> Path:
    root = cfg[section]["root"]
    return Path(root) if root is not None else Path(cfg["out"]) / "data"


def _load_items(root: Path, family: str, base_seed: int, count: int) -> list:
    from .datasets import load_problem

    items = []
    for i in range(count):
        seed = base_seed + i
        try:
            A, meta, b, graph = load_problem(root, family, seed)
        except FileNotFoundError as exc:
            raise FileNotFoundError(
                f"missing cached problem {family}/{seed} under {root} "
                "(run the generate command first)"
            ) from exc
        items.append((f"{family}/{seed}", A, meta, b, graph))
    return items


def _split_items(items, cfg_section: dict):
    from .datasets import make_split

    ratio = tuple(cfg_section["split_ratio"])
    return make_split(items, ratio, seed=cfg_section["split_seed"])


def _load_model(cfg: dict, section: str):
    from .gnn import load_checkpoint

    path = cfg[section]["checkpoint"]
    if path is None:
        path = Path(cfg["out"]) / "checkpoint.bin"
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(
            f"no checkpoint at {path} (train first or set {section}.checkpoint)"
        )
    return load_checkpoint(path)


def _build_preconditioner(name: str, A, graph, model):
    from .gnn import forward
    from .precond import (
        build_fsai,
        build_ic0,
        build_identity,
        build_jacobi,
        build_learned_spai,
    )

    if name == "none":
        return build_identity(A)
    if name == "diag":
        return build_jacobi(A)
    if name == "ic0":
        return build_ic0(A)
    if name == "fsai":
        return build_fsai(A)
    if name == "learned":
        fwd = forward(model, graph)
        return build_learned_spai(fwd.G, model.config.epsilon)
    raise ValueError(f"unknown preconditioner {name!r}")


def cmd_generate(cfg: dict) -> int:
    from .datasets import gen_poisson2d, gen_rhs, gen_synthetic, save_problem

    g = cfg["generate"]
    family = g["family"]
    root = _data_root(cfg, "generate")
    base = cfg["seed"]
    sizes, densities = [], []
    for i in range(g["count"]):
        seed = base + i
        if family == "poisson2d":
            A, meta = gen_poisson2d(g["nx"], g["ny"], coeff_seed=None)
        elif family == "heat2d":
            A, meta = gen_poisson2d(g["nx"], g["ny"], coeff_seed=seed)
        elif family == "synthetic":
            A, meta = gen_synthetic(g["n"], g["density"], seed)
        else:
            raise ValueError(f"unknown family {family!r}")
        b = gen_rhs(meta, seed + RHS_SEED_OFFSET)
        save_problem(root, seed, A, meta, b)
        sizes.append(A.n_rows)
        densities.append(A.nnz / (A.n_rows * A.n_cols))
    print(
        f"generated {g['count']} {family} instances under {root}: "
        f"n={sizes[0]}, mean density {sum(densities) / len(densities):.3e}"
    )
    return 0


def cmd_train(cfg: dict) -> int:
    from .gnn import GnnConfig, init_model
    from .training import TrainConfig, TrainItem, train

    t = cfg["train"]
    root = _data_root(cfg, "train")
    items = _load_items(root, t["family"], cfg["seed"], t["count"])
    train_raw, test_raw = _split_items(items, t)
    train_items = [TrainItem(A, graph, b) for (_, A, _, b, graph) in train_raw]
    test_items = [TrainItem(A, graph, b) for (_, A, _, b, graph) in test_raw]

    d_node = train_items[0].graph.d_node
    model_cfg = GnnConfig(
        n_layers=t["n_layers"],
        hidden_dim=t["hidden_dim"],
        mlp_hidden_layers=t["mlp_hidden_layers"],
        activation=t["activation"],
        epsilon=t["epsilon"],
        seed=cfg["seed"],
        d_node=d_node,
        d_edge=train_items[0].graph.d_edge,
        message_uses_hidden_edge=t["message_uses_hidden_edge"],
    )
    model = init_model(model_cfg)
    train_cfg = TrainConfig(
        epochs=t["epochs"],
        batch_size=t["batch_size"],
        lr=t["lr"],
        weight_decay=t["weight_decay"],
        lr_decay=t["lr_decay"],
        hutchinson_samples_per_matrix=t["hutchinson_samples_per_matrix"],
        seed=cfg["seed"],
        norm_kind=t["norm_kind"],
        val_every=t["val_every"],
    )
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    log = train(
        model,
        train_items,
        train_cfg,
        val_items=test_items,
        log_path=out / "train_log.csv",
        checkpoint_path=out / "checkpoint.bin",
    )
    last = log.rows[-1]
    print(
        f"trained {t['epochs']} epochs on {len(train_items)} matrices "
        f"({len(test_items)} held out); final mean loss {last[1]:.6e}; "
        f"checkpoint {out / 'checkpoint.bin'}, log {out / 'train_log.csv'}"
    )
    return 0


def cmd_bench(cfg: dict) -> int:
    from concurrent.futures import ThreadPoolExecutor

    from .pcg import SolveConfig, pcg_solve

    b = cfg["bench"]
    root = _data_root(cfg, "bench")
    items = _load_items(root, b["family"], cfg["seed"], b["count"])
    if b["use_test_split"]:
        _, items = _split_items(items, b)
    pres = list(b["preconditioners"])
    model = _load_model(cfg, "bench") if "learned" in pres else None

    def bench_one(item):
        matrix_id, A, _, rhs, graph = item
        rows = []
        for name in pres:
            M = _build_preconditioner(name, A, graph, model)
            for rtol in b["rtols"]:
                rep = pcg_solve(A, rhs, M, SolveConfig(rtol=rtol, max_iters=b["max_iters"]))
                rows.append(
                    (
                        matrix_id,
                        name,
                        rtol,
                        rep.k,
                        rep.t_construct_ns,
                        rep.t_apply_total_ns,
                        rep.t_cg_total_ns,
                        rep.converged,
                    )
                )
        return rows

    workers = int(b.get("workers", 1))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            all_rows = [r for rows in pool.map(bench_one, items) for r in rows]
    else:
        all_rows = [r for item in items for r in bench_one(item)]

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / "bench.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "matrix_id",
                "preconditioner",
                "rtol",
                "k",
                "t_construct_ns",
                "t_apply_total_ns",
                "t_cg_total_ns",
                "converged",
            ]
        )
        writer.writerows(all_rows)

    print(f"benchmarked {len(items)} matrices x {len(pres)} preconditioners -> {path}")
    tightest = min(b["rtols"])
    for name in pres:
        ks = [r[3] for r in all_rows if r[1] == name and r[2] == tightest]
        conv = all(r[7] for r in all_rows if r[1] == name and r[2] == tightest)
        mean_k = sum(ks) / len(ks) if ks else float("nan")
        print(f"  rtol {tightest:g}  {name:8s} mean k = {mean_k:8.2f}  all converged: {conv}")
    return 0


def cmd_spectral(cfg: dict) -> int:
    from .spectral import spectral_record

    s = cfg["spectral"]
    root = _data_root(cfg, "spectral")
    items = _load_items(root, s["family"], cfg["seed"], s["count"])
    if s["use_test_split"]:
        _, items = _split_items(items, s)
    pres = list(s["preconditioners"])
    model = _load_model(cfg, "spectral") if "learned" in pres else None

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / "spectral.jsonl"
    kappas: dict[str, list] = {name: [] for name in pres}
    with open(path, "w") as fh:
        for item in items:
            matrix_id, A, _, _, graph = item
            for name in pres:
                M = _build_preconditioner(name, A, graph, model)
                rec = {"matrix_id": matrix_id, "preconditioner": name}
                rec.update(spectral_record(A, M))
                fh.write(json.dumps(rec) + "\n")
                kappas[name].append(rec["kappa"])
    print(f"spectral report for {len(items)} matrices -> {path}")
    for name in pres:
        vals = kappas[name]
        print(f"  {name:8s} mean kappa = {sum(vals) / len(vals):10.3f}")
    return 0


def cmd_verify(cfg: dict) -> int:
    from .verify import run_verify

    results = run_verify(cfg["seed"])
    failed = 0
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failed += 0 if ok else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 2 if failed else 0


def main(argv=None) -> int:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed override")
    common.add_argument("--out", metavar="DIR", help="output directory override")
    common.add_argument("--threads", type=int, metavar="N", help="BLAS thread count (default 1)")

    parser = _Parser(prog="spaigraph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "generate": cmd_generate,
        "train": cmd_train,
        "bench": cmd_bench,
        "spectral": cmd_spectral,
        "verify": cmd_verify,
    }
    for name in commands:
        sub.add_parser(name, parents=[common])

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits on usage errors and --help
        return int(exc.code or 0)
    try:
        cfg = load_config(args)  # pure-json, safe before thread pinning
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _pin_threads(int(cfg["threads"]))

    try:
        return commands[args.command](cfg)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
