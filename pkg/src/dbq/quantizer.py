"""Ternary multi-branch weight quantizer.

A B-branch quantizer represents each weight as a linear combination of B
ternary values: w_q = gamma2 * sum_j alpha_j * e_j with e_j in {-1, 0, +1}.
The N = 3^B representable levels are sums of signed branch scales; the
quantizer is a staircase over N-1 learnable thresholds, applied to
gamma1-normalized weights. Training mode replaces the hard steps with
temperature-controlled sigmoids so every parameter gets a smooth gradient;
inference mode uses exact steps and decomposes bit-exactly into packed
ternary branch vectors.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .backend import kernels

MAX_BRANCHES = 4
ALPHA_EPS = 1e-8


def _as_vector(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {a.shape}")
    return a


@lru_cache(maxsize=None)
def _canonical_structure(B: int):
    ref = np.array([1.5 ** (B - j) for j in range(1, B + 1)])
    rows = np.array(list(itertools.product((-1, 0, 1), repeat=B)), dtype=np.int8)
    order = np.argsort(rows.astype(np.float64) @ ref, kind="stable")
    E = rows[order].copy()
    E.setflags(write=False)
    return E


def sign_matrix(B: int) -> np.ndarray:
    """Canonical (3^B, B) matrix of branch signs, one row per level.

    Rows are ordered so the induced levels sum_j e_ij * alpha_j ascend for
    any alphas with consecutive ratios in (1, 2); the reference ordering
    uses ratio 3/2. For B=2 this is the classic two-branch layout
    (-1,-1), (-1,0), (0,-1), (-1,+1), (0,0), (+1,-1), (0,+1), (+1,0), (+1,+1).
    Returned array is read-only.
    """
    if not isinstance(B, (int, np.integer)) or not 1 <= B <= MAX_BRANCHES:
        raise ValueError(f"branch count must be an int in [1, {MAX_BRANCHES}], got {B!r}")
    return _canonical_structure(int(B))


def branch_coefficients(E: np.ndarray) -> np.ndarray:
    """Fixed per-step coefficients: consecutive row differences of the sign
    matrix, shape (N-1, B) with entries in {-2, -1, 0, +1, +2}. Each column
    telescopes to e_N - e_1 = 2."""
    E = np.asarray(E)
    if E.ndim != 2 or E.shape[0] != 3 ** E.shape[1]:
        raise ValueError(f"sign matrix has inconsistent shape {E.shape}")
    return np.diff(E.astype(np.int8), axis=0)


@dataclass
class QuantizerParams:
    """Learnable state of one kernel-wise quantizer.

    alphas: positive branch scales, descending-ish (see project_alphas)
    gamma1: pre-quantization scale (maps weights into normalized units)
    gamma2: post-quantization scale (maps levels back to weight units)
    thresholds: N-1 step positions in normalized units; strictly increasing
        at initialization, free to move during training
    """

    alphas: np.ndarray
    gamma1: float
    gamma2: float
    thresholds: np.ndarray

    def __post_init__(self):
        self.alphas = _as_vector(self.alphas, "alphas")
        self.thresholds = _as_vector(self.thresholds, "thresholds")
        self.gamma1 = float(self.gamma1)
        self.gamma2 = float(self.gamma2)
        B = self.alphas.shape[0]
        if not 1 <= B <= MAX_BRANCHES:
            raise ValueError(f"got {B} branch scales, supported range is 1..{MAX_BRANCHES}")
        if self.thresholds.shape[0] != 3 ** B - 1:
            raise ValueError(
                f"expected {3 ** B - 1} thresholds for B={B}, got {self.thresholds.shape[0]}")

    @property
    def num_branches(self) -> int:
        return self.alphas.shape[0]

    @property
    def num_levels(self) -> int:
        return 3 ** self.num_branches

    def validate(self):
        """Raise if the invariants that must hold at initialization are violated."""
        if not np.all(self.alphas > 0):
            raise ValueError("branch scales must be positive")
        if self.gamma2 <= 0:
            raise ValueError("gamma2 must be positive")
        if not np.all(np.diff(self.thresholds) > 0):
            raise ValueError("thresholds must be strictly increasing at initialization")

    def copy(self) -> "QuantizerParams":
        return QuantizerParams(self.alphas.copy(), self.gamma1, self.gamma2,
                               self.thresholds.copy())


@dataclass
class TernaryBranches:
    """Inference-time representation: B ternary vectors plus effective scales.

    Reconstruction sum_j scales[j] * branch_vectors[j] reproduces the exact
    inference output bit-for-bit (scales absorb gamma2).
    """

    branch_vectors: np.ndarray  # (B, D) int8 over {-1, 0, +1}
    scales: np.ndarray          # (B,) float64, gamma2 * alpha_j
    num_branches: int = field(init=False)

    def __post_init__(self):
        self.branch_vectors = np.asarray(self.branch_vectors, dtype=np.int8)
        if self.branch_vectors.ndim != 2:
            raise ValueError("branch_vectors must be (B, D)")
        self.scales = _as_vector(self.scales, "scales")
        if self.scales.shape[0] != self.branch_vectors.shape[0]:
            raise ValueError("one scale per branch required")
        self.num_branches = self.branch_vectors.shape[0]


def quant_levels(alphas: np.ndarray) -> np.ndarray:
    """The 3^B representable values in normalized (pre-gamma2) units,
    in canonical row order. Symmetric about zero."""
    alphas = _as_vector(alphas, "alphas")
    E = sign_matrix(alphas.shape[0])
    levels = np.zeros(E.shape[0])
    for j in range(alphas.shape[0]):
        levels += alphas[j] * E[:, j]
    return levels


def step_coefficients(alphas: np.ndarray) -> np.ndarray:
    """Per-step level increments sum_j b_ij * alpha_j (length N-1)."""
    alphas = _as_vector(alphas, "alphas")
    b = branch_coefficients(sign_matrix(alphas.shape[0]))
    return b.astype(np.float64) @ alphas


def project_alphas(alphas: np.ndarray) -> np.ndarray:
    """Clamp branch scales onto the ordering region used by the canonical
    level layout: alpha_1 >= eps and alpha_{j+1} in [alpha_j / 2, alpha_j].

    Applied after each optimizer step when projection is enabled; keeps the
    step coefficients consistent with ascending levels.
    """
    a = _as_vector(alphas, "alphas").copy()
    a[0] = max(a[0], ALPHA_EPS)
    for j in range(1, a.shape[0]):
        a[j] = min(max(a[j], a[j - 1] / 2.0), a[j - 1])
    return a


def thresholds_sorted(p: QuantizerParams) -> bool:
    """Monitoring hook: thresholds are free during training; report whether
    they are still strictly increasing."""
    return bool(np.all(np.diff(p.thresholds) > 0))


def smooth_step(u, temp: float):
    """Sigmoid relaxation of the unit step: 1 / (1 + exp(-T*u)).

    Overflow-safe for |T*u| up to at least 1e6; monotone in u; the hard step
    is recovered as T grows. Accepts scalars or arrays.
    """
    if temp <= 0:
        raise ValueError("temperature must be positive")
    u = np.asarray(u, dtype=np.float64)
    out = kernels.sigmoid(temp * u)
    return float(out) if out.ndim == 0 else out


def forward_train(w: np.ndarray, p: QuantizerParams, temp: float) -> np.ndarray:
    """Training-mode forward pass with smooth steps.

    z_k = gamma2 * [sum_i smooth_step(gamma1*w_k - t_i, T) * s_i - sum_j alpha_j]
    """
    if temp <= 0:
        raise ValueError("temperature must be positive")
    w = _as_vector(w, "w")
    s = step_coefficients(p.alphas)
    return kernels.forward_train(w, p.thresholds, s, float(np.sum(p.alphas)),
                                 p.gamma1, p.gamma2, float(temp))


def _level_index(w: np.ndarray, p: QuantizerParams) -> np.ndarray:
    # count of strict threshold crossings; a weight exactly on a threshold
    # stays on the lower level
    u = p.gamma1 * w
    return np.sum(u[:, None] > p.thresholds[None, :], axis=1)


def _scaled_levels(p: QuantizerParams) -> np.ndarray:
    # accumulated branch-by-branch in the same order as reconstruct() so
    # forward_infer and branch reconstruction are bit-identical
    E = sign_matrix(p.num_branches)
    levels = np.zeros(E.shape[0])
    for j in range(p.num_branches):
        levels += (p.gamma2 * p.alphas[j]) * E[:, j]
    return levels


def forward_infer(w: np.ndarray, p: QuantizerParams) -> np.ndarray:
    """Inference-mode forward pass with exact steps.

    Every output is exactly gamma2 times one of the 3^B levels; ties at a
    threshold resolve to the lower level.
    """
    w = _as_vector(w, "w")
    return _scaled_levels(p)[_level_index(w, p)]


def decompose(w: np.ndarray, p: QuantizerParams) -> TernaryBranches:
    """Exact ternary branch decomposition of the inference-mode output."""
    w = _as_vector(w, "w")
    idx = _level_index(w, p)
    E = sign_matrix(p.num_branches)
    return TernaryBranches(branch_vectors=E[idx].T.copy(),
                           scales=p.gamma2 * p.alphas)


def reconstruct(t: TernaryBranches) -> np.ndarray:
    """Rebuild quantized weights from packed branches; bit-identical to
    forward_infer on the originating weights."""
    out = np.zeros(t.branch_vectors.shape[1])
    for j in range(t.num_branches):
        out += t.scales[j] * t.branch_vectors[j]
    return out


def branch_sparsity(t: TernaryBranches) -> tuple[np.ndarray, float]:
    """Zero fraction per branch and averaged over branches, both in [0, 1]."""
    if t.branch_vectors.shape[1] == 0:
        raise ValueError("empty branches")
    per_branch = np.mean(t.branch_vectors == 0, axis=1)
    return per_branch, float(np.mean(per_branch))
