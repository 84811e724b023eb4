"""Bit-accurate hardware cost model.

Four metrics over an architecture plus a per-layer precision assignment:

  computational cost   full adders for all dot products
  sparsity-aware cost  same, with zero weights skipped
  representational     bits held in weight + activation tensors
  model storage        bits held in weight tensors alone

Conventions (calibrated against published ResNet-20 / MobileNetV1 tables):
fp32 parameters compute as 23b (mantissa) and store as 32b. A fixed(b) dot
product of length D costs D*bw*ba multiplier FAs plus (D-1) tree adds of
width ba + bw + ceil(log2 D) - 1. A ternary(B) layer is multiplier-free:
B parallel branch adder trees, each (D-1) adds of width ba + ceil(log2 D) - 1,
storing 2 bits per weight per branch. Batch-norm is modeled as D=1 fp32
multiplies on the wide accumulator and contributes fp32 weight storage.
"""

from __future__ import annotations

import csv
import fnmatch
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .quantizer import TernaryBranches

LAYER_KINDS = ("first", "depthwise", "pointwise", "fully-connected", "other")

FP32_COMPUTE_BITS = 23
FP32_STORAGE_BITS = 32
TERNARY_BITS_PER_BRANCH = 2


class ArchError(ValueError):
    """Malformed or inconsistent architecture / assignment input."""


@dataclass(frozen=True)
class Precision:
    """Weight or activation precision: fp32, fixed(b), or ternary(B)."""

    kind: str
    value: int = 0

    @classmethod
    def parse(cls, text: str, allow_ternary: bool = True) -> "Precision":
        s = str(text).strip().lower()
        if s == "fp32":
            return cls("fp32")
        for prefix, kind in (("fixed:", "fixed"), ("ternary:", "ternary")):
            if s.startswith(prefix):
                try:
                    v = int(s[len(prefix):])
                except ValueError:
                    raise ArchError(f"bad precision value in {text!r}") from None
                if kind == "fixed" and not 2 <= v <= 16:
                    raise ArchError(f"fixed-point bit width must be in [2, 16], got {v}")
                if kind == "ternary":
                    if not allow_ternary:
                        raise ArchError("activations cannot be ternary")
                    if not 1 <= v <= 4:
                        raise ArchError(f"branch count must be in [1, 4], got {v}")
                return cls(kind, v)
        raise ArchError(f"unknown precision {text!r} (expected fp32, fixed:B, ternary:B)")

    def __str__(self):
        return self.kind if self.kind == "fp32" else f"{self.kind}:{self.value}"


def effective_precisions(weights: Precision, acts: Precision):
    """(weight compute, weight storage, activation compute, activation storage) bits.

    For ternary weights the compute number is the branch count B (the layer
    is costed as B multiplier-free branch adder trees) and storage is 2B.
    """
    if weights.kind == "fp32":
        w_c, w_s = FP32_COMPUTE_BITS, FP32_STORAGE_BITS
    elif weights.kind == "fixed":
        w_c = w_s = weights.value
    else:
        w_c, w_s = weights.value, TERNARY_BITS_PER_BRANCH * weights.value
    if acts.kind == "fp32":
        a_c, a_s = FP32_COMPUTE_BITS, FP32_STORAGE_BITS
    elif acts.kind == "fixed":
        a_c = a_s = acts.value
    else:
        raise ArchError("activations cannot be ternary")
    return w_c, w_s, a_c, a_s


@dataclass
class LayerSpec:
    name: str
    kind: str
    n_dot: int       # number of dot products
    dot_len: int     # dot-product length
    weight_count: int
    act_count: int       # output activation elements (0 for storage-only layers)
    act_in_count: int = 0  # input activation elements, used by the
    #                        input+output counting convention

    def validate(self) -> list[str]:
        problems = []
        if self.kind not in LAYER_KINDS:
            problems.append(f"layer {self.name}: unknown kind {self.kind!r}")
        for fname in ("n_dot", "dot_len", "weight_count", "act_count", "act_in_count"):
            v = getattr(self, fname)
            if not isinstance(v, int) or v < 0:
                problems.append(f"layer {self.name}: {fname} must be a non-negative int")
        if self.n_dot > 0 and self.dot_len == 0:
            problems.append(f"layer {self.name}: dot_len is 0 but n_dot > 0")
        if (self.kind == "fully-connected" and self.n_dot > 0
                and self.weight_count != self.n_dot * self.dot_len):
            problems.append(
                f"layer {self.name}: fully-connected weight_count "
                f"{self.weight_count} != n_dot*dot_len {self.n_dot * self.dot_len}")
        return problems


@dataclass
class ArchSpec:
    name: str
    layers: list[LayerSpec]


@dataclass
class PrecisionAssignment:
    """Per-layer precision resolution: default, then layer-kind override,
    then first matching name pattern. Densities (non-zero weight fractions)
    resolve by name pattern and default to 1."""

    name: str = "unnamed"
    default_weights: Precision = Precision("fp32")
    default_acts: Precision = Precision("fp32")
    kind_overrides: dict = field(default_factory=dict)    # kind -> {"weights"/"activations": Precision}
    layer_overrides: dict = field(default_factory=dict)   # name pattern -> same
    densities: dict = field(default_factory=dict)         # name pattern -> float

    def resolve(self, layer: LayerSpec) -> tuple[Precision, Precision]:
        w, a = self.default_weights, self.default_acts
        ov = self.kind_overrides.get(layer.kind)
        if ov:
            w = ov.get("weights", w)
            a = ov.get("activations", a)
        for pattern, ov in self.layer_overrides.items():
            if fnmatch.fnmatchcase(layer.name, pattern):
                w = ov.get("weights", w)
                a = ov.get("activations", a)
                break
        return w, a

    def density(self, layer: LayerSpec) -> float:
        for pattern, d in self.densities.items():
            if fnmatch.fnmatchcase(layer.name, pattern):
                return d
        return 1.0


@dataclass
class CostReport:
    comp: float            # C_C, full adders
    sparse_comp: float     # C_S, full adders
    repr_bits: float       # C_R
    storage_bits: float    # C_M
    per_layer: list        # (name, cc, cs, cr, cm) rows

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["layer", "Cc", "Cs", "Cr", "Cm"])
            for row in self.per_layer:
                wr.writerow(row)
            wr.writerow(["total", self.comp, self.sparse_comp,
                         self.repr_bits, self.storage_bits])


def _dot_fa(n_dot: int, d_used: int, d_full: int, w_prec: Precision, ba: int,
            bw: int) -> int:
    """Full adders for n_dot dot products of (possibly density-reduced)
    length d_used; the adder-tree depth term keeps the full length."""
    if n_dot == 0 or d_full == 0:
        return 0
    tree = math.ceil(math.log2(d_full)) if d_full > 1 else 0
    if w_prec.kind == "ternary":
        return n_dot * w_prec.value * (d_used - 1) * (ba + tree - 1)
    return n_dot * (d_used * bw * ba + (d_used - 1) * (ba + bw + tree - 1))


def _layer_costs(layer: LayerSpec, assign: PrecisionAssignment, density: float,
                 act_convention: str):
    w_prec, a_prec = assign.resolve(layer)
    bw_c, bw_s, ba_c, ba_s = effective_precisions(w_prec, a_prec)
    if layer.n_dot > 0 and layer.dot_len == 0:
        raise ArchError(f"layer {layer.name}: dot-product length is zero")
    cc = _dot_fa(layer.n_dot, layer.dot_len, layer.dot_len, w_prec, ba_c, bw_c)
    d_sparse = max(1, int(math.floor(density * layer.dot_len + 0.5)))
    cs = _dot_fa(layer.n_dot, d_sparse, layer.dot_len, w_prec, ba_c, bw_c)
    cm = layer.weight_count * bw_s
    acts = layer.act_count
    if act_convention == "both":
        acts += layer.act_in_count
    cr = cm + acts * ba_s
    return cc, cs, cr, cm


def cost_report(arch: ArchSpec, assign: PrecisionAssignment,
                act_convention: str = "output") -> CostReport:
    """All four metrics plus the per-layer breakdown.

    act_convention selects how representational cost counts activations:
    "output" (default) uses each layer's output tensor, "both" adds the
    input tensor as well.
    """
    if act_convention not in ("output", "both"):
        raise ArchError(f"unknown activation convention {act_convention!r}")
    rows, totals = [], np.zeros(4)
    for layer in arch.layers:
        cc, cs, cr, cm = _layer_costs(layer, assign, assign.density(layer),
                                      act_convention)
        rows.append((layer.name, cc, cs, cr, cm))
        totals += (cc, cs, cr, cm)
    return CostReport(comp=float(totals[0]), sparse_comp=float(totals[1]),
                      repr_bits=float(totals[2]), storage_bits=float(totals[3]),
                      per_layer=rows)


def comp_cost(arch: ArchSpec, assign: PrecisionAssignment) -> float:
    return cost_report(arch, assign).comp


def sparse_comp_cost(arch: ArchSpec, assign: PrecisionAssignment) -> float:
    return cost_report(arch, assign).sparse_comp


def repr_cost(arch: ArchSpec, assign: PrecisionAssignment,
              act_convention: str = "output") -> float:
    return cost_report(arch, assign, act_convention).repr_bits


def storage_cost(arch: ArchSpec, assign: PrecisionAssignment) -> float:
    return cost_report(arch, assign).storage_bits


def sparsity_table(layers) -> dict:
    """Per-layer zero fractions for a quantized layer set.

    ``layers`` is an iterable of (name, payload) where payload is either a
    TernaryBranches or an array of quantized fixed-point weights. Returns
    {"layers": [(name, elements, zero_fraction)], "average": f} with the
    average weighted by element count, i.e. total zeros / total elements.
    """
    rows, zeros, total = [], 0, 0
    for name, payload in layers:
        if isinstance(payload, TernaryBranches):
            n = payload.branch_vectors.size
            z = int(np.count_nonzero(payload.branch_vectors == 0))
        else:
            arr = np.asarray(payload)
            n = arr.size
            z = int(np.count_nonzero(arr == 0))
        rows.append((name, n, z / n if n else 0.0))
        zeros += z
        total += n
    return {"layers": rows, "average": zeros / total if total else 0.0}


def densities_from_sparsity(report: dict) -> dict:
    """Turn a sparsity_table report into assignment densities
    (name -> non-zero fraction), ready for PrecisionAssignment.densities."""
    return {name: 1.0 - zero_frac for name, _, zero_frac in report["layers"]
            if zero_frac < 1.0}


def _parse_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise ArchError(f"file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ArchError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: "
                        f"{e.msg}") from None


def load_arch(path) -> ArchSpec:
    """Load and validate an architecture spec (JSON)."""
    data = _parse_json(path)
    if not isinstance(data.get("layers"), list) or not data["layers"]:
        raise ArchError(f"{path}: expected a non-empty 'layers' list")
    layers, problems, seen = [], [], set()
    for i, entry in enumerate(data["layers"]):
        try:
            layer = LayerSpec(
                name=str(entry["name"]), kind=str(entry["kind"]),
                n_dot=int(entry["n_dot"]), dot_len=int(entry["dot_len"]),
                weight_count=int(entry["weight_count"]),
                act_count=int(entry.get("act_count", 0)),
                act_in_count=int(entry.get("act_in_count", 0)))
        except (KeyError, TypeError, ValueError) as e:
            problems.append(f"layer #{i}: {e!r}")
            continue
        if layer.name in seen:
            problems.append(f"duplicate layer name {layer.name!r}")
        seen.add(layer.name)
        problems.extend(layer.validate())
        layers.append(layer)
    if problems:
        raise ArchError(f"{path}: " + "; ".join(problems))
    return ArchSpec(name=str(data.get("name", "unnamed")), layers=layers)


def _parse_override(entry) -> dict:
    out = {}
    if "weights" in entry:
        out["weights"] = Precision.parse(entry["weights"])
    if "activations" in entry:
        out["activations"] = Precision.parse(entry["activations"], allow_ternary=False)
    return out


def load_assignment(path) -> PrecisionAssignment:
    """Load a precision assignment (JSON)."""
    data = _parse_json(path)
    default = data.get("default", {})
    try:
        assign = PrecisionAssignment(
            name=str(data.get("name", "unnamed")),
            default_weights=Precision.parse(default.get("weights", "fp32")),
            default_acts=Precision.parse(default.get("activations", "fp32"),
                                         allow_ternary=False),
            kind_overrides={str(k): _parse_override(v)
                            for k, v in data.get("kinds", {}).items()},
            layer_overrides={str(k): _parse_override(v)
                             for k, v in data.get("layers", {}).items()},
            densities={str(k): float(v)
                       for k, v in data.get("densities", {}).items()},
        )
    except ArchError as e:
        raise ArchError(f"{path}: {e}") from None
    for k in assign.kind_overrides:
        if k not in LAYER_KINDS:
            raise ArchError(f"{path}: unknown layer kind {k!r} in overrides")
    for pat, d in assign.densities.items():
        if not 0 < d <= 1:
            raise ArchError(f"{path}: density for {pat!r} must be in (0, 1], got {d}")
    return assign
