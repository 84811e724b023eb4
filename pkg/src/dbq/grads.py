"""Analytical backward pass for the smooth quantizer.

Gradients of a scalar loss L with respect to all quantizer parameters and
the full-precision weights, given upstream dL/dz. With
g_ki = smooth_step(gamma1*w_k - t_i, T) and h_ki = g_ki * (1 - g_ki):

    dL/dgamma2 = (1/gamma2) sum_k u_k z_k
    dL/dalpha_j = gamma2 sum_k u_k [sum_i b_ij g_ki - 1]
    dL/dt_i = -gamma2 T sum_k u_k h_ki s_i
    dL/dw_k = gamma1 gamma2 T u_k sum_i h_ki s_i
    dL/dgamma1 = gamma2 T sum_k u_k w_k sum_i h_ki s_i

where s_i = sum_j b_ij alpha_j. All accumulation is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .quantizer import QuantizerParams, branch_coefficients, forward_train, sign_matrix


@dataclass
class QuantizerGrads:
    d_alphas: np.ndarray
    d_gamma1: float
    d_gamma2: float
    d_thresholds: np.ndarray
    d_weights: np.ndarray

    def groups(self) -> dict[str, np.ndarray]:
        return {
            "alphas": self.d_alphas,
            "gamma1": np.array([self.d_gamma1]),
            "gamma2": np.array([self.d_gamma2]),
            "thresholds": self.d_thresholds,
            "weights": self.d_weights,
        }


def backward(w: np.ndarray, p: QuantizerParams, temp: float,
             upstream: np.ndarray) -> QuantizerGrads:
    """Closed-form gradients of L = sum_k upstream_k * z_k at z = forward_train."""
    if temp <= 0:
        raise ValueError("temperature must be positive")
    if p.gamma2 == 0:
        raise ValueError("gamma2 must be nonzero")
    w = np.asarray(w, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if w.ndim != 1 or upstream.shape != w.shape:
        raise ValueError(f"weights {w.shape} and upstream {upstream.shape} must be "
                         "matching 1-D vectors")
    b = branch_coefficients(sign_matrix(p.num_branches))
    d_alphas, d_gamma1, d_gamma2, d_thresholds, d_weights = kernels.backward(
        w, upstream, p.thresholds, b, p.alphas, p.gamma1, p.gamma2, float(temp))
    return QuantizerGrads(d_alphas, float(d_gamma1), float(d_gamma2),
                          d_thresholds, d_weights)


def finite_diff_check(w: np.ndarray, p: QuantizerParams, temp: float,
                      upstream: np.ndarray, step: float = 1e-6) -> dict[str, float]:
    """Central-difference validation of backward().

    Perturbs every scalar parameter by +/-step in L = sum_k upstream_k * z_k
    and returns the relative error per parameter group:

        max|analytic - cd| / max(max|analytic|, max|cd|, eps)

    normalized at group scale. (A per-component ratio is not resolvable in
    float64: central differences carry ~1e-9 absolute cancellation noise at
    step 1e-6, which would swamp components whose true gradient is tiny,
    e.g. weights far from every threshold.)

    At large temperatures (T ~ 1e4) the sigmoids saturate and the
    central-difference estimate near a threshold carries O((T*step)^2)
    truncation error, so tolerances that hold at moderate T are expected to
    fail there; that reflects the saturation of the smooth quantizer, not a
    defect of the analytic gradients.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    w = np.asarray(w, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    analytic = backward(w, p, temp, upstream)

    def loss(params: QuantizerParams, weights: np.ndarray) -> float:
        return float(upstream @ forward_train(weights, params, temp))

    def central(evaluate, base):
        flat = np.atleast_1d(np.asarray(base, dtype=np.float64))
        out = np.empty_like(flat)
        for i in range(flat.shape[0]):
            hi, lo = flat.copy(), flat.copy()
            hi[i] += step
            lo[i] -= step
            out[i] = (evaluate(hi) - evaluate(lo)) / (2.0 * step)
        return out

    cd = {
        "alphas": central(
            lambda a: loss(QuantizerParams(a, p.gamma1, p.gamma2, p.thresholds), w),
            p.alphas),
        "gamma1": central(
            lambda g: loss(QuantizerParams(p.alphas, g[0], p.gamma2, p.thresholds), w),
            [p.gamma1]),
        "gamma2": central(
            lambda g: loss(QuantizerParams(p.alphas, p.gamma1, g[0], p.thresholds), w),
            [p.gamma2]),
        "thresholds": central(
            lambda t: loss(QuantizerParams(p.alphas, p.gamma1, p.gamma2, t), w),
            p.thresholds),
        "weights": central(lambda ww: loss(p, ww), w),
    }

    errors = {}
    for name, a in analytic.groups().items():
        c = cd[name]
        denom = max(float(np.max(np.abs(a))), float(np.max(np.abs(c))), 1e-12)
        errors[name] = float(np.max(np.abs(a - c)) / denom)
    return errors
