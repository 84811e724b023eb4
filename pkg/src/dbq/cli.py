"""Command-line interface.

    dbq cost      evaluate the hardware cost model on an architecture
    dbq quantize  fit quantizers to raw weights and write packed branches
    dbq check     run gradient / decomposition / serialization self-tests
    dbq train     run a full-precision or fine-tuning experiment

Exit codes: 0 success, 1 failed self-check, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import struct
import sys
from pathlib import Path

import numpy as np

from . import costmodel, packing
from .backend import backend_name
from .fit import init_quantizer
from .grads import finite_diff_check
from .quantizer import (MAX_BRANCHES, QuantizerParams, decompose, forward_infer,
                        project_alphas, quant_levels, reconstruct)
from .schedules import TrainSchedule

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


class CliError(Exception):
    """Input/usage problem; maps to exit code 2."""


def bundled_arch_path(name: str) -> Path:
    return Path(__file__).parent / "arch" / f"{name}.json"


# ---------------------------------------------------------------- weights io

def write_weights_file(path, kernels: np.ndarray):
    """Raw kernel matrix: u64 kernel count, u64 length, then float64 data,
    all little-endian."""
    kernels = np.atleast_2d(np.asarray(kernels, dtype=np.float64))
    with open(path, "wb") as f:
        f.write(struct.pack("<QQ", kernels.shape[0], kernels.shape[1]))
        f.write(kernels.astype("<f8").tobytes())


def read_weights_file(path) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise CliError(f"cannot read weights file: {e}") from None
    if len(data) < 16:
        raise CliError(f"{path}: missing length header")
    n, d = struct.unpack_from("<QQ", data, 0)
    expected = 16 + 8 * n * d
    if len(data) < expected:
        raise CliError(f"{path}: payload truncated ({len(data)} bytes, "
                       f"header implies {expected})")
    if n == 0 or d == 0:
        raise CliError(f"{path}: empty weight matrix")
    return np.frombuffer(data, dtype="<f8", count=n * d, offset=16).reshape(n, d)


# ---------------------------------------------------------------------- cost

def cmd_cost(args) -> int:
    arch = costmodel.load_arch(args.arch)
    assign = costmodel.load_assignment(args.assign)
    report = costmodel.cost_report(arch, assign, act_convention=args.act_convention)
    print(f"architecture: {arch.name} ({len(arch.layers)} layers)")
    print(f"assignment:   {assign.name}")
    print(f"computational cost   C_C = {report.comp:.4e} FA")
    print(f"sparsity-aware cost  C_S = {report.sparse_comp:.4e} FA")
    print(f"representational     C_R = {report.repr_bits:.4e} bits")
    print(f"model storage        C_M = {report.storage_bits:.4e} bits")
    print(f"{'layer':<12} {'Cc':>14} {'Cs':>14} {'Cr':>14} {'Cm':>14}")
    for name, cc, cs, cr, cm in report.per_layer:
        print(f"{name:<12} {cc:>14.6g} {cs:>14.6g} {cr:>14.6g} {cm:>14.6g}")
    if args.csv:
        report.write_csv(args.csv)
        print(f"wrote {args.csv}")
    return EXIT_OK


# ------------------------------------------------------------------ quantize

def cmd_quantize(args) -> int:
    if not 1 <= args.branches <= MAX_BRANCHES:
        raise CliError(f"unsupported branch count {args.branches} "
                       f"(supported: 1..{MAX_BRANCHES})")
    kernels = read_weights_file(args.weights)
    n, d = kernels.shape
    if d < 3 ** args.branches:
        raise CliError(f"kernels of length {d} are too short for "
                       f"{3 ** args.branches} levels")
    blobs = {}
    mses, ratios = [], []
    for k in range(n):
        w = kernels[k]
        params = init_quantizer(w, args.branches)
        branches = decompose(w, params)
        blobs[f"kernel_{k:05d}"] = packing.pack(branches)
        wq = reconstruct(branches)
        mses.append(float(np.mean((w - wq) ** 2)))
        if args.branches >= 2:
            ratios.append(float(params.alphas[0] / params.alphas[1]))
        if args.report:
            levels = params.gamma2 * quant_levels(params.alphas)
            used = np.unique(forward_infer(w, params)).size
            print(f"kernel {k}: mse {mses[-1]:.3e}  gamma2 {params.gamma2:.4g}  "
                  f"levels [{', '.join(f'{v:.4g}' for v in levels)}] "
                  f"({used} used)"
                  + (f"  alpha ratio {ratios[-1]:.3f}" if ratios else ""))
    Path(args.out).write_bytes(packing.pack_container(blobs))
    print(f"packed {n} kernels (B={args.branches}, D={d}) -> {args.out}")
    print(f"fit mse: mean {np.mean(mses):.3e}  max {np.max(mses):.3e}")
    if ratios:
        qs = np.percentile(ratios, [0, 10, 50, 90, 100])
        print("branch-scale ratio alpha1/alpha2: "
              f"min {qs[0]:.3f}  p10 {qs[1]:.3f}  median {qs[2]:.3f}  "
              f"p90 {qs[3]:.3f}  max {qs[4]:.3f}")
    return EXIT_OK


# --------------------------------------------------------------------- check

def _check_gradients(rng, inject_fault: bool):
    worst = 0.0
    for _ in range(10):
        nb = int(rng.integers(1, 3))
        n_lvl = 3 ** nb
        alphas = project_alphas(np.sort(rng.uniform(0.5, 2.0, nb))[::-1])
        params = QuantizerParams(
            alphas=alphas, gamma1=rng.uniform(0.5, 2.0), gamma2=rng.uniform(0.5, 2.0),
            thresholds=np.sort(rng.uniform(-3, 3, n_lvl - 1)))
        w = rng.normal(0, 1.5, 48)
        upstream = rng.normal(0, 1, 48)
        temp = float(rng.choice([1.0, 10.0, 50.0]))
        errs = finite_diff_check(w, params, temp, upstream)
        worst = max(worst, max(errs.values()))
    if inject_fault:
        worst = max(worst, 1.0)  # hidden hook: simulate a broken gradient
    return worst, worst <= 1e-6


def _check_decomposition(rng):
    for _ in range(10):
        nb = int(rng.integers(1, 4))
        alphas = np.array([1.5 ** (nb - j) for j in range(1, nb + 1)]) \
            * rng.uniform(0.8, 1.2)
        n_lvl = 3 ** nb
        params = QuantizerParams(
            alphas=alphas, gamma1=rng.uniform(0.5, 2.0), gamma2=rng.uniform(0.5, 2.0),
            thresholds=np.sort(rng.uniform(-3, 3, n_lvl - 1)))
        w = rng.normal(0, 2.0, 4096)
        w[:n_lvl - 1] = params.thresholds / params.gamma1  # boundary hits
        if not np.array_equal(forward_infer(w, params),
                              reconstruct(decompose(w, params))):
            return False
    return True


def _check_roundtrip(rng):
    from .quantizer import TernaryBranches
    for _ in range(200):
        nb = int(rng.integers(1, MAX_BRANCHES + 1))
        d = int(rng.integers(0, 40))
        t = TernaryBranches(branch_vectors=rng.integers(-1, 2, (nb, d)),
                            scales=rng.uniform(0.1, 3.0, nb))
        back = packing.unpack(packing.pack(t))
        if not (np.array_equal(back.branch_vectors, t.branch_vectors)
                and np.array_equal(back.scales, t.scales)):
            return False
    return True


def cmd_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    grad_err, grad_ok = _check_gradients(rng, args.inject_fault)
    decomp_ok = _check_decomposition(rng)
    pack_ok = _check_roundtrip(rng)
    print(f"gradient check: max rel err {grad_err:.3e} "
          f"{'PASS' if grad_ok else 'FAIL'} (tolerance 1e-06)")
    print(f"decomposition exactness: {'PASS' if decomp_ok else 'FAIL'}")
    print(f"pack/unpack roundtrip: {'PASS' if pack_ok else 'FAIL'}")
    print(f"kernel backend: {backend_name()}")
    ok = grad_ok and decomp_ok and pack_ok
    print("self-check:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# --------------------------------------------------------------------- train

def _load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise CliError(f"cannot read config: {e}") from None
    except json.JSONDecodeError as e:
        raise CliError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None


def _build_dataset(spec: dict, split: str):
    from .nn import data as nndata
    kind = spec.get("kind", "blobs")
    seed = int(spec.get("seed", 0))
    sample_seed = seed * 2 + (1 if split == "train" else 2)
    n = int(spec.get("n_train" if split == "train" else "n_eval", 1000))
    if kind == "blobs":
        return nndata.gaussian_blobs(n, int(spec.get("classes", 4)),
                                     dim=int(spec.get("dim", 2)),
                                     spread=float(spec.get("spread", 0.15)),
                                     seed=seed, sample_seed=sample_seed)
    if kind == "spirals":
        return nndata.spirals(n, int(spec.get("classes", 3)),
                              noise=float(spec.get("noise", 0.1)),
                              seed=seed, sample_seed=sample_seed)
    if kind == "patches":
        return nndata.patch_images(n, int(spec.get("classes", 10)),
                                   size=int(spec.get("size", 8)),
                                   channels=int(spec.get("channels", 1)),
                                   noise=float(spec.get("noise", 0.25)),
                                   seed=seed, sample_seed=sample_seed)
    if kind == "idx":
        key = "train" if split == "train" else "eval"
        return nndata.idx_dataset(spec[f"{key}_images"], spec[f"{key}_labels"])
    raise CliError(f"unknown dataset kind {kind!r}")


def cmd_train(args) -> int:
    from .nn import (build_model, evaluate, finetune_quantized, load_checkpoint,
                     save_checkpoint, train_fp, write_metrics_csv)
    from .nn.training import TrainConfig

    cfg = _load_config(args.config)
    if args.mode == "finetune":
        overrides = cfg.get("finetune", {})
        if not isinstance(overrides, dict):
            raise CliError("'finetune' section must be an object")
        cfg = {**cfg, **overrides}
    try:
        schedule = TrainSchedule(
            eta0=float(cfg.get("eta0", 0.1)),
            total_epochs=int(cfg.get("total_epochs", 10)),
            warmup_epochs=int(cfg.get("warmup_epochs", 0)),
            temp_init=float(cfg.get("T_init", 5.0)),
            temp_inc=float(cfg.get("T_inc", 2.5)),
            momentum=float(cfg.get("momentum", 0.9)),
            weight_decay=float(cfg.get("weight_decay", 0.0)))
        config = TrainConfig(schedule=schedule,
                             batch_size=int(cfg.get("batch_size", 64)),
                             seed=int(cfg.get("seed", 0)),
                             project_alphas=bool(cfg.get("project_alphas", True)))
        if "model" not in cfg or "dataset" not in cfg:
            raise ValueError("config needs 'model' and 'dataset' sections")
        model = build_model(cfg["model"], config.seed)
    except (ValueError, KeyError, TypeError) as e:
        raise CliError(f"bad config: {e}") from None

    train_data = _build_dataset(cfg["dataset"], "train")
    eval_data = _build_dataset(cfg["dataset"], "eval")
    out_dir = Path(cfg.get("out_dir", "runs"))
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.mode == "fp":
        log = train_fp(model, train_data, eval_data, config)
        save_checkpoint(out_dir / "model_fp.npz", model)
        write_metrics_csv(out_dir / "metrics_fp.csv", log)
        final = log[-1] if log else (0, 0, 0, 0, 0, evaluate(model, eval_data))
        print(f"fp training done: final train acc {final[4]:.4f}, "
              f"eval acc {final[5]:.4f}")
        print(f"wrote {out_dir / 'model_fp.npz'} and {out_dir / 'metrics_fp.csv'}")
    else:
        ckpt = cfg.get("fp_checkpoint", str(out_dir / "model_fp.npz"))
        if not Path(ckpt).exists():
            raise CliError(f"fp checkpoint not found: {ckpt}")
        load_checkpoint(ckpt, model)
        log, final_acc = finetune_quantized(model, train_data, eval_data, config)
        save_checkpoint(out_dir / "model_quantized.npz", model)
        write_metrics_csv(out_dir / "metrics_finetune.csv", log)
        blobs = {}
        for i, layer in enumerate(model.quantized_layers()):
            for k, branches in enumerate(layer.ternary_branches()):
                blobs[f"layer{i}.kernel_{k:05d}"] = packing.pack(branches)
        (out_dir / "model_quantized.dbq").write_bytes(packing.pack_container(blobs))
        print(f"fine-tuning done: eval acc {final_acc:.4f} (exact ternary)")
        print(f"wrote {out_dir / 'model_quantized.npz'}, "
              f"{out_dir / 'model_quantized.dbq'} and "
              f"{out_dir / 'metrics_finetune.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dbq", description="ternary branch quantization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cost", help="evaluate the hardware cost model")
    p.add_argument("--arch", required=True, help="architecture spec (JSON)")
    p.add_argument("--assign", required=True, help="precision assignment (JSON)")
    p.add_argument("--csv", help="also write per-layer rows to this CSV file")
    p.add_argument("--act-convention", choices=["output", "both"], default="output",
                   help="activation counting convention for C_R")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("quantize", help="fit quantizers to raw weights")
    p.add_argument("--weights", required=True, help="raw weight file "
                   "(u64 kernel count, u64 length, float64 data, little-endian)")
    p.add_argument("--branches", type=int, required=True, help="ternary branch count")
    p.add_argument("--out", required=True, help="output packed container")
    p.add_argument("--report", action="store_true", help="print per-kernel fit report")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("check", help="run self-tests")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("train", help="run a training experiment")
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--mode", choices=["fp", "finetune"], required=True)
    p.set_defaults(func=cmd_train)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, costmodel.ArchError, packing.PackError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
