#!/usr/bin/env python3
"""Regenerate the bundled architecture specs and precision assignments.

ResNet-20 (CIFAR-10, option-A shortcuts) and MobileNetV1 (224x224, width 1.0)
layer dimensions, written as cost-model JSON into src/dbq/arch/. Batch-norm
layers appear as D=1 per-element multiplies; pooling contributes nothing and
is omitted. Densities in the sparsity-aware assignments come from reported
per-layer branch sparsities (MobileNetV1) or are back-solved from the
published sparsity-aware totals (ResNet-20).
"""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "src" / "dbq" / "arch"


def layer(name, kind, n_dot, dot_len, weight_count, act_count, act_in_count=0):
    return {"name": name, "kind": kind, "n_dot": n_dot, "dot_len": dot_len,
            "weight_count": weight_count, "act_count": act_count,
            "act_in_count": act_in_count}


def resnet20():
    layers = [layer("conv1", "first", 32 * 32 * 16, 27, 432, 32 * 32 * 16,
                    32 * 32 * 3),
              layer("bn1", "other", 32 * 32 * 16, 1, 2 * 16, 0)]
    stages = [(16, 16, 32)] * 6 + [(16, 32, 16)] + [(32, 32, 16)] * 5 \
        + [(32, 64, 8)] + [(64, 64, 8)] * 5
    in_sp = 32
    for i, (cin, cout, sp) in enumerate(stages, start=2):
        n = sp * sp * cout
        layers.append(layer(f"conv{i}", "other", n, cin * 9, cin * 9 * cout, n,
                            in_sp * in_sp * cin))
        layers.append(layer(f"bn{i}", "other", n, 1, 2 * cout, 0))
        in_sp = sp
    layers.append(layer("fc", "fully-connected", 10, 64, 640, 10, 64))
    return {"name": "resnet20-cifar10", "layers": layers}


def mobilenetv1():
    layers = [layer("conv1", "first", 112 * 112 * 32, 27, 864, 112 * 112 * 32,
                    224 * 224 * 3),
              layer("bn_conv1", "other", 112 * 112 * 32, 1, 2 * 32, 0)]
    blocks = [(32, 64, 112, 112), (64, 128, 56, 56), (128, 128, 56, 56),
              (128, 256, 28, 28), (256, 256, 28, 28), (256, 512, 14, 14),
              (512, 512, 14, 14), (512, 512, 14, 14), (512, 512, 14, 14),
              (512, 512, 14, 14), (512, 512, 14, 14), (512, 1024, 7, 7),
              (1024, 1024, 7, 7)]
    in_sp = 112
    for i, (cin, cout, sdw, spw) in enumerate(blocks):
        ndw = sdw * sdw * cin
        layers.append(layer(f"dw{i}", "depthwise", ndw, 9, 9 * cin, ndw,
                            in_sp * in_sp * cin))
        layers.append(layer(f"bn_dw{i}", "other", ndw, 1, 2 * cin, 0))
        npw = spw * spw * cout
        layers.append(layer(f"pw{i}", "pointwise", npw, cin, cin * cout, npw,
                            sdw * sdw * cin))
        layers.append(layer(f"bn_pw{i}", "other", npw, 1, 2 * cout, 0))
        in_sp = spw
    layers.append(layer("fc", "fully-connected", 1000, 1024, 1024 * 1000, 1000, 1024))
    return {"name": "mobilenetv1-imagenet", "layers": layers}


# per-PW-layer DBQ-2T branch densities (1 - reported sparsity)
PW_DENSITY_2T = [0.3518, 0.4825, 0.5355, 0.5504, 0.5695, 0.5564, 0.5660,
                 0.5706, 0.5830, 0.5744, 0.5770, 0.5759, 0.5423]
# 8b fixed-point PW weight densities for the FX8 configuration
PW_DENSITY_FX8 = [0.6445, 0.8926, 0.9314, 0.9327, 0.9547, 0.9269, 0.9359,
                  0.9400, 0.9600, 0.9443, 0.9450, 0.9300, 0.8931]


def assignments():
    fp32 = {"weights": "fp32", "activations": "fp32"}
    out = {}
    out["resnet20_fp32"] = {"name": "fp32", "default": fp32}
    # conv bodies ternary; first, last and all batch norms stay FP;
    # densities back-solved from the published sparsity-aware totals
    for b, dens in ((1, 0.4593), (2, 0.5817)):
        out[f"resnet20_dbq{b}t"] = {
            "name": f"dbq-{b}t",
            "default": {"weights": f"ternary:{b}", "activations": "fp32"},
            "layers": {"conv1": fp32, "fc": fp32, "bn*": fp32},
            "densities": {"conv[2-9]": dens, "conv1[0-9]": dens},
        }
    out["mobilenetv1_fp32"] = {"name": "fp32", "default": fp32}
    out["mobilenetv1_fx8"] = {
        "name": "fx8",
        "default": {"weights": "fixed:8", "activations": "fixed:8"},
        "layers": {"bn*": fp32},
        "densities": {f"pw{i}": d for i, d in enumerate(PW_DENSITY_FX8)},
    }
    out["mobilenetv1_dbq2t4"] = {
        "name": "dbq-2t-4",
        "default": {"weights": "fixed:8", "activations": "fixed:8"},
        "kinds": {"pointwise": {"weights": "ternary:2"}},
        "layers": {"bn*": fp32},
        "densities": {f"pw{i}": d for i, d in enumerate(PW_DENSITY_2T)},
    }
    return out


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    specs = {"resnet20": resnet20(), "mobilenetv1": mobilenetv1()}
    for name, spec in specs.items():
        (OUT / f"{name}.json").write_text(json.dumps(spec, indent=1) + "\n")
    for name, assign in assignments().items():
        (OUT / f"{name}.json").write_text(json.dumps(assign, indent=1) + "\n")
    print(f"wrote {len(specs) + len(assignments())} files to {OUT}")


if __name__ == "__main__":
    main()
