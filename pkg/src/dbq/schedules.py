"""Learning-rate and temperature schedules plus the SGD update rule.

Warmup ramps linearly to eta0 over the first E_W epochs; the remaining
epochs follow a half-cosine decay to zero. The quantizer temperature grows
linearly, one increment per epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class TrainSchedule:
    eta0: float
    total_epochs: int
    warmup_epochs: int = 0
    temp_init: float = 1.0
    temp_inc: float = 0.0
    momentum: float = 0.9
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.eta0 <= 0:
            raise ValueError("eta0 must be positive")
        if self.total_epochs < 0 or self.warmup_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        # total_epochs == 0 is a valid no-op run (e.g. init-only fine-tuning)
        if self.warmup_epochs > 0 and self.warmup_epochs >= self.total_epochs:
            raise ValueError("warmup epochs must be < total epochs")
        if self.temp_init <= 0:
            raise ValueError("initial temperature must be positive")
        if self.temp_inc < 0:
            raise ValueError("temperature increment must be non-negative")

    def lr_at(self, epoch: int) -> float:
        if epoch < self.warmup_epochs:
            return warmup_lr(epoch, self.eta0, self.warmup_epochs)
        return cosine_lr(epoch - self.warmup_epochs, self.eta0,
                         self.total_epochs - self.warmup_epochs)

    def temp_at(self, epoch: int) -> float:
        return temperature_at(epoch, self.temp_init, self.temp_inc)


def cosine_lr(epoch: int, eta0: float, total_epochs: int) -> float:
    """Half-cosine decay: eta0 at epoch 0, eta0/2 at the midpoint, 0 at the end."""
    if not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs}]")
    return 0.5 * eta0 * (1.0 + math.cos(math.pi * epoch / total_epochs))


def warmup_lr(epoch: int, eta0: float, warmup_epochs: int) -> float:
    """Linear ramp reaching eta0 on the last warmup epoch."""
    if not 0 <= epoch < warmup_epochs:
        raise ValueError(f"epoch {epoch} outside warmup range [0, {warmup_epochs})")
    return (epoch + 1) * eta0 / warmup_epochs


def temperature_at(epoch: int, temp_init: float, temp_inc: float) -> float:
    """Linear increment schedule: T_e = T_init + e * T_inc."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return temp_init + epoch * temp_inc


def sgd_step(params: np.ndarray, grads: np.ndarray, velocity: np.ndarray,
             eta: float, beta: float, weight_decay: float = 0.0):
    """One SGD-with-momentum update.

        v <- beta * v + (g + weight_decay * p)
        p <- p - eta * v

    Weight decay enters as an additive gradient term; callers exclude
    quantizer parameters by passing weight_decay=0 for them. Returns the
    updated (params, velocity) without mutating the inputs.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    velocity = np.asarray(velocity, dtype=np.float64)
    if params.shape != grads.shape or params.shape != velocity.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"velocity {velocity.shape}")
    v = beta * velocity + (grads + weight_decay * params)
    return params - eta * v, v
