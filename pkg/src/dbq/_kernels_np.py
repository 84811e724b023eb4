"""Pure-numpy quantizer kernels.

Reference implementation of the hot inner loops; the compiled extension in
``_kernels.pyx`` mirrors these exactly. Both operate in float64. Results of
the two backends agree to rounding error (~1e-15 relative) but are not
guaranteed bit-identical because summation order and exp() differ.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Overflow-safe logistic function, exact for |x| up to ~1e308."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    with np.errstate(over="ignore", under="ignore"):
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        e = np.exp(x[~pos])
        out[~pos] = e / (1.0 + e)
    return out


def sigmoid_pair(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (g, h) with g = sigmoid(x) and h = g*(1-g).

    h is formed from exp(-|x|) directly so it underflows gracefully instead
    of cancelling catastrophically when g is within rounding of 1.
    """
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(under="ignore"):
        e = np.exp(-np.abs(x))
        denom = 1.0 + e
        small = e / denom          # sigmoid(-|x|)
        large = 1.0 / denom        # sigmoid(+|x|)
        g = np.where(x >= 0, large, small)
        h = small * large
    return g, h


def forward_train(w, thresholds, step_coeffs, alpha_sum, gamma1, gamma2, temp):
    """Smooth training-mode quantizer forward pass.

    z_k = gamma2 * [sum_i sigmoid(T*(gamma1*w_k - t_i)) * s_i - alpha_sum]
    where s_i are the per-step level increments.
    """
    u = gamma1 * w[:, None] - thresholds[None, :]
    g = sigmoid(temp * u)
    return gamma2 * (g @ step_coeffs - alpha_sum)


def backward(w, upstream, thresholds, b_matrix, alphas, gamma1, gamma2, temp):
    """Closed-form gradients of L = sum_k upstream_k * z_k.

    Returns (d_alphas, d_gamma1, d_gamma2, d_thresholds, d_weights).
    """
    step_coeffs = b_matrix.astype(np.float64) @ alphas
    alpha_sum = float(np.sum(alphas))
    u = gamma1 * w[:, None] - thresholds[None, :]
    g, h = sigmoid_pair(temp * u)

    inner = g @ step_coeffs - alpha_sum           # z / gamma2
    d_gamma2 = float(upstream @ inner)

    hs = h @ step_coeffs                          # sum_i h_{k,i} s_i
    d_weights = (gamma1 * gamma2 * temp) * upstream * hs
    d_gamma1 = gamma2 * temp * float((upstream * w) @ hs)
    d_thresholds = -(gamma2 * temp) * (upstream @ h) * step_coeffs
    d_alphas = gamma2 * ((upstream @ g) @ b_matrix.astype(np.float64)
                         - float(np.sum(upstream)))
    return d_alphas, d_gamma1, d_gamma2, d_thresholds, d_weights
