"""Fixed-point activation quantization with batch-norm derived clipping.

Post-BN activations in channel i are approximately N(beta_i, gamma_i^2), so
clipping at c = max_i(beta_i + k*gamma_i) bounds the clip probability; the
default k=6 keeps it below 0.1%. A single c per tensor (rather than
per-channel) is what allows the downstream dot products to stay fixed-point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_SIGMA_MULTIPLIER = 6.0


@dataclass
class BnChannelParams:
    """Per-channel batch-norm affine parameters (shift beta, scale gamma)."""

    betas: np.ndarray
    gammas: np.ndarray

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64).ravel()
        self.gammas = np.asarray(self.gammas, dtype=np.float64).ravel()
        if self.betas.shape != self.gammas.shape or self.betas.size == 0:
            raise ValueError("betas and gammas must be equal-length, non-empty")

    @property
    def num_channels(self) -> int:
        return self.betas.shape[0]


def clip_value(bn: BnChannelParams, k: float = DEFAULT_SIGMA_MULTIPLIER) -> float:
    """Tensor-wide clipping value c = max_i (beta_i + k * gamma_i)."""
    if k <= 0:
        raise ValueError("sigma multiplier k must be positive")
    return float(np.max(bn.betas + k * bn.gammas))


def _round_half_away(x: np.ndarray) -> np.ndarray:
    # np.round would round half-to-even; the storage format pins
    # half-away-from-zero for bit-exact reproducibility
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def relu_x_quant(x: np.ndarray, c: float, bits: int) -> np.ndarray:
    """Clipped-ReLU uniform quantizer onto the grid {0, step, ..., c} with
    2^bits levels and step c / (2^bits - 1). Idempotent and monotone."""
    if c <= 0:
        raise ValueError("clip value must be positive")
    if not 2 <= bits <= 16:
        raise ValueError("bit width must be in [2, 16]")
    x = np.asarray(x, dtype=np.float64)
    qmax = float(2 ** bits - 1)
    step = c / qmax
    return step * np.clip(_round_half_away(x / step), 0.0, qmax)


def relu_x_grad(x: np.ndarray, c: float, upstream: np.ndarray) -> np.ndarray:
    """Clipped straight-through gradient: passes upstream where 0 < x < c,
    zero outside (rounding is treated as identity)."""
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.shape != upstream.shape:
        raise ValueError(f"shape mismatch: x {x.shape}, upstream {upstream.shape}")
    return np.where((x > 0) & (x < c), upstream, 0.0)
