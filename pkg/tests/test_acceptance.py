"""Acceptance criteria.

Each test enforces one release criterion at its stated tolerance and prints
one PASS/FAIL line (visible under ``pytest -s`` or with ``-rA``). Criteria:

  1. published cost-table rows from bundled specs (< 1 s)
  2. analytical gradients vs central differences, 100 seeds (< 10 s)
  3. smooth quantizer matches exact quantizer at T=1e4
  4. ternary decomposition reconstructs inference output bit-exactly
  5. two-branch step-coefficient structure (symbolic form)
  6. initialization recovers noisy level structure; k-means monotone
  7. batch-norm clipping guarantee at k=6
  8. desk-scale 2T fine-tune tracks the FP baseline (<= 5 min)
  9. sparsity-aware cost consistency plus exact recounts
 10. pack/unpack bit-exact roundtrips and malformed-input rejection
"""

import math
import time

import numpy as np
import pytest

import dbq
from dbq import (BnChannelParams, QuantizerParams, TernaryBranches, clip_value,
                 cost_report, decompose, finite_diff_check, forward_infer,
                 forward_train, init_quantizer, kmeans_1d, load_arch,
                 load_assignment, pack, project_alphas, quant_levels,
                 reconstruct, sparsity_table, step_coefficients, unpack)
from dbq.cli import bundled_arch_path
from dbq.costmodel import LayerSpec, ArchSpec, Precision, PrecisionAssignment
from dbq.nn import build_toy_cnn, evaluate, finetune_quantized, patch_images, train_fp
from dbq.nn.training import TrainConfig
from dbq.schedules import TrainSchedule


def report(num, name, ok, detail=""):
    print(f"[criterion {num:>2}] {'PASS' if ok else 'FAIL'}  {name}"
          + (f"  ({detail})" if detail else ""))
    assert ok, f"criterion {num} failed: {name} {detail}"


def constraint_params(rng, B=2, spread=3.0):
    a1 = rng.uniform(0.5, 2.5)
    if B == 1:
        alphas = np.array([a1])
    else:
        alphas = project_alphas(
            np.concatenate([[a1], rng.uniform(a1 / 2, a1, B - 1)]))
    levels = quant_levels(alphas)
    thresholds = (levels[:-1] + levels[1:]) / 2
    return QuantizerParams(alphas, rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5),
                           thresholds)


def test_criterion_1_cost_tables():
    start = time.perf_counter()
    rows = [
        ("resnet20", "resnet20_fp32", 23.73e9, 0.05, 8.63e6, 0.02),
        ("resnet20", "resnet20_dbq1t", 1.60e9, 0.05, 0.61e6, 0.05),
        ("resnet20", "resnet20_dbq2t", 2.83e9, 0.05, 1.15e6, 0.05),
        ("mobilenetv1", "mobilenetv1_dbq2t4", 2.18e10, 0.05, 2.18e7, 0.05),
    ]
    worst = 0.0
    ok = True
    for arch_name, assign_name, cc, cc_tol, cm, cm_tol in rows:
        r = cost_report(load_arch(bundled_arch_path(arch_name)),
                        load_assignment(bundled_arch_path(assign_name)))
        cc_err = abs(r.comp / cc - 1)
        cm_err = abs(r.storage_bits / cm - 1)
        ok &= cc_err <= cc_tol and cm_err <= cm_tol
        worst = max(worst, cc_err, cm_err)
    elapsed = time.perf_counter() - start
    ok &= elapsed < 1.0
    report(1, "cost tables reproduce published rows", ok,
           f"worst deviation {worst * 100:.2f}%, {elapsed * 1000:.0f} ms")


def test_criterion_2_gradient_suite():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        for B in (1, 2):
            params = constraint_params(rng, B)
            w = rng.normal(0, 1.5, 64)
            upstream = rng.normal(0, 1.0, 64)
            for temp in (1.0, 10.0, 100.0):
                errs = finite_diff_check(w, params, temp, upstream)
                worst = max(worst, max(errs.values()))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 10.0
    report(2, "gradients match finite differences", ok,
           f"max rel err {worst:.2e}, {elapsed:.1f} s")


def test_criterion_3_temperature_limit():
    rng = np.random.default_rng(0)
    params = constraint_params(rng, B=2)
    need, chunks = 100_000, []
    while sum(len(c) for c in chunks) < need:
        w = rng.uniform(-1.2 / params.gamma1, 1.2 / params.gamma1, 200_000)
        dist = np.min(np.abs(params.gamma1 * w[:, None]
                             - params.thresholds[None, :]), axis=1)
        chunks.append(w[dist >= 1e-2])
    w = np.concatenate(chunks)[:need]
    gap = np.max(np.abs(forward_train(w, params, 1e4) - forward_infer(w, params)))
    ok = gap <= 1e-3 * params.gamma2
    report(3, "T=1e4 forward matches exact quantizer", ok,
           f"max |train-infer| = {gap:.2e} vs {1e-3 * params.gamma2:.2e}")


def test_criterion_4_decomposition_exactness():
    rng = np.random.default_rng(1)
    params = constraint_params(rng, B=2)
    w = rng.normal(0, 2.0 / params.gamma1, 1_000_000)
    w[:8] = params.thresholds / params.gamma1  # exact boundary values
    z = forward_infer(w, params)
    zr = reconstruct(decompose(w, params))
    ok = np.array_equal(z, zr)
    report(4, "decomposition reconstructs inference bit-exactly", ok,
           f"{w.size} elements incl. boundaries")


def test_criterion_5_b2_structure():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        a1 = rng.uniform(0.1, 5.0)
        a2 = rng.uniform(a1 / 2, a1)
        s = step_coefficients(np.array([a1, a2]))
        expected = np.array([a2, a1 - a2, 2 * a2 - a1, a1 - a2,
                             a1 - a2, 2 * a2 - a1, a1 - a2, a2])
        worst = max(worst, float(np.max(np.abs(s - expected))))
    ok = worst <= 1e-12
    report(5, "two-branch step coefficients match expanded form", ok,
           f"max |diff| = {worst:.2e}")


def test_criterion_6_initialization():
    sigma = 0.01
    rng = np.random.default_rng(3)
    true_levels = 2.0 * quant_levels(np.array([1.5, 1.0]))
    worst = 0.0
    for _ in range(10):
        w = true_levels[rng.integers(0, 9, 3000)] + rng.normal(0, sigma, 3000)
        p = init_quantizer(w, 2)
        recovered = np.sort(p.gamma2 * quant_levels(p.alphas))
        worst = max(worst, float(np.max(np.abs(recovered - true_levels))))
    levels_ok = worst <= 5 * sigma

    monotone = True
    for seed in range(100):
        x = np.random.default_rng(seed).normal(0, 1, 400)
        km = kmeans_1d(x, 9)
        monotone &= bool(np.all(np.diff(km.objective_trace) <= 1e-12))
    ok = levels_ok and monotone
    report(6, "initialization recovers noisy levels; k-means monotone", ok,
           f"max level err {worst:.4f} (<= {5 * sigma}), 100 k-means runs")


def test_criterion_7_clipping_guarantee():
    bn = BnChannelParams(betas=[0.0, 0.8, -0.3], gammas=[1.0, 0.6, 1.4])
    c = clip_value(bn, k=6.0)
    rng = np.random.default_rng(4)
    clipped = total = 0
    for beta, gamma in zip(bn.betas, bn.gammas):
        draws = rng.normal(beta, gamma, 1_000_000)
        clipped += int(np.sum(draws > c))
        total += draws.size
    frac = clipped / total
    ok = frac <= 0.001
    report(7, "6-sigma clip keeps clipped fraction <= 0.1%", ok,
           f"clipped {frac * 100:.5f}% of {total} draws")


def test_criterion_8_desk_scale_finetune():
    start = time.perf_counter()
    train = patch_images(2000, 10, size=8, noise=0.7, seed=11, sample_seed=111)
    ev = patch_images(1000, 10, size=8, noise=0.7, seed=11, sample_seed=112)
    qm = {"first": "ternary:2", "conv": "ternary:2", "output": "ternary:2"}
    model = build_toy_cnn(1, 8, 10, seed=0, channels=(8, 16), quantize_map=qm)
    n_params = sum(p.data.size for p in model.params())
    assert n_params <= 50_000

    fp_cfg = TrainConfig(schedule=TrainSchedule(eta0=0.05, total_epochs=15,
                                                momentum=0.9, weight_decay=1e-4),
                         batch_size=64, seed=0)
    fp_acc = train_fp(model, train, ev, fp_cfg)[-1][5]

    ft_sched = TrainSchedule(eta0=0.005, total_epochs=15, momentum=0.9,
                             weight_decay=1e-4, temp_init=5.0, temp_inc=2.5)
    ft_cfg = TrainConfig(schedule=ft_sched, batch_size=64, seed=1)
    _, exact_acc = finetune_quantized(model, train, ev, ft_cfg)
    final_temp = ft_sched.temp_at(ft_sched.total_epochs - 1)
    smooth_acc = evaluate(model, ev, temp=final_temp)

    elapsed = time.perf_counter() - start
    acc_gap = abs(fp_acc - exact_acc) * 100
    mode_gap = abs(smooth_acc - exact_acc) * 100
    ok = acc_gap <= 2.0 and mode_gap <= 0.5 and elapsed <= 300
    report(8, "2T fine-tune tracks FP baseline", ok,
           f"fp {fp_acc:.3f}, 2T {exact_acc:.3f}, gap {acc_gap:.2f} pts, "
           f"train-vs-infer {mode_gap:.2f} pts, {elapsed:.0f} s")


def test_criterion_9_sparsity_accounting():
    rng = np.random.default_rng(5)
    n_dot, dot_len = 32, 512
    kernels = rng.normal(0, 1, (n_dot, dot_len))
    branch_sets = []
    for k in range(n_dot):
        p = init_quantizer(kernels[k], 2)
        branch_sets.append((f"kernel{k}", decompose(kernels[k], p)))

    table = sparsity_table(branch_sets)
    manual_zeros = sum(int(np.sum(t.branch_vectors == 0)) for _, t in branch_sets)
    manual_total = sum(t.branch_vectors.size for _, t in branch_sets)
    recount_ok = table["average"] == manual_zeros / manual_total

    density = 1.0 - table["average"]
    layer = LayerSpec(name="pw", kind="pointwise", n_dot=n_dot, dot_len=dot_len,
                      weight_count=n_dot * dot_len, act_count=0)
    arch = ArchSpec(name="t", layers=[layer])
    assign = PrecisionAssignment(default_weights=Precision("ternary", 2),
                                 default_acts=Precision("fixed", 8),
                                 densities={"pw": density})
    r = cost_report(arch, assign)
    d_eff = math.floor(density * dot_len + 0.5)
    predicted = (d_eff - 1) / (dot_len - 1)
    ratio = r.sparse_comp / r.comp
    ratio_ok = abs(ratio / predicted - 1) <= 0.01
    ok = recount_ok and ratio_ok
    report(9, "sparsity-aware cost matches density prediction", ok,
           f"density {density:.3f}, Cs/Cc {ratio:.4f} vs {predicted:.4f}, "
           f"recount exact: {recount_ok}")


def test_criterion_10_serialization():
    rng = np.random.default_rng(6)
    ok = True
    for _ in range(10_000):
        B = int(rng.integers(1, 5))
        D = int(rng.integers(0, 30))
        t = TernaryBranches(branch_vectors=rng.integers(-1, 2, (B, D)),
                            scales=rng.normal(0, 2, B))
        back = unpack(pack(t))
        ok &= np.array_equal(back.branch_vectors, t.branch_vectors)
        ok &= np.array_equal(back.scales, t.scales)

    blob = bytearray(pack(TernaryBranches(
        branch_vectors=rng.integers(-1, 2, (2, 9)), scales=[1.0, 0.5])))
    cases = []
    bad = blob.copy()
    bad[:4] = b"XXXX"
    cases.append((bytes(bad), dbq.BadMagicError))
    bad = blob.copy()
    bad[4] = 9
    cases.append((bytes(bad), dbq.UnsupportedVersionError))
    bad = blob.copy()
    bad[15 + 16] |= 0b11
    cases.append((bytes(bad), dbq.InvalidCodeError))
    cases.append((bytes(blob[:-2]), dbq.TruncatedError))
    for data, exc in cases:
        with pytest.raises(exc):
            unpack(data)
    report(10, "serialization roundtrips and rejects malformed input", ok,
           "10k roundtrips, 4 malformed classes")
