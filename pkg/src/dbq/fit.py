"""One-time quantizer initialization from a weight vector.

Pipeline: max-abs scale normalization, 1-D k-means for the level centroids,
midpoint thresholds, and a least-squares fit of the branch scales. Runs once
before fine-tuning; everything afterwards is learned by gradient descent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quantizer import (ALPHA_EPS, QuantizerParams, project_alphas, sign_matrix)

DEGENERATE_SCALE = 1e-8


@dataclass
class KMeansResult:
    centroids: np.ndarray     # (N,) sorted ascending
    assignments: np.ndarray   # (D,) 0-based centroid index per sample
    objective: float          # final sum of squared distances
    objective_trace: np.ndarray  # objective after each assignment step


def init_scales(w: np.ndarray) -> tuple[float, float]:
    """(gamma1, gamma2) with gamma2 = max |w| and gamma1 = 1/gamma2, so the
    normalized weights gamma1*w span exactly [-1, 1]. All-zero input falls
    back to gamma2 = 1e-8."""
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise ValueError("weight vector is empty")
    gamma2 = float(np.max(np.abs(w)))
    if gamma2 == 0.0:
        gamma2 = DEGENERATE_SCALE
    return 1.0 / gamma2, gamma2


def kmeans_1d(x: np.ndarray, n_clusters: int, max_iters: int = 100) -> KMeansResult:
    """Lloyd iterations on scalars, seeded at evenly spaced quantiles.

    Deterministic; terminates when assignments stop changing or after
    max_iters. Empty clusters are reseeded at the point farthest from its
    current centroid. Centroids are kept sorted, so the objective trace is
    non-increasing.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if n_clusters < 2:
        raise ValueError("need at least 2 clusters")
    if x.shape[0] < n_clusters:
        raise ValueError(f"need at least {n_clusters} samples, got {x.shape[0]}")

    qs = (np.arange(n_clusters) + 0.5) / n_clusters
    centroids = np.sort(np.quantile(x, qs))
    prev = None
    trace = []
    for _ in range(max_iters):
        assignments = np.argmin(np.abs(x[:, None] - centroids[None, :]), axis=1)
        trace.append(float(np.sum((x - centroids[assignments]) ** 2)))
        if prev is not None and np.array_equal(assignments, prev):
            break
        prev = assignments
        for c in range(n_clusters):
            mask = assignments == c
            if np.any(mask):
                centroids[c] = np.mean(x[mask])
        for c in range(n_clusters):  # reseed empties at the worst-served point
            if not np.any(assignments == c):
                centroids[c] = x[np.argmax(np.abs(x - centroids[assignments]))]
        centroids = np.sort(centroids)

    assignments = np.argmin(np.abs(x[:, None] - centroids[None, :]), axis=1)
    objective = float(np.sum((x - centroids[assignments]) ** 2))
    return KMeansResult(centroids, assignments, objective, np.asarray(trace))


def init_thresholds(centroids: np.ndarray) -> np.ndarray:
    """Midpoints of consecutive centroids; strictly increasing when the
    centroids are distinct."""
    c = np.asarray(centroids, dtype=np.float64)
    if c.ndim != 1 or c.shape[0] < 2:
        raise ValueError("need a 1-D vector of at least 2 centroids")
    if np.any(np.diff(c) < 0):
        raise ValueError("centroids must be sorted ascending")
    return (c[:-1] + c[1:]) / 2.0


def fit_alphas(x_norm: np.ndarray, assignments: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Least-squares branch scales for fixed level assignments.

    Minimizes sum_k (x_k - sum_j e_{i(k),j} alpha_j)^2 through the BxB
    normal equations, then projects onto the ordering constraint. A singular
    system (e.g. everything assigned to the all-zero row) falls back to
    halving scales spanning the data range.
    """
    x = np.asarray(x_norm, dtype=np.float64)
    idx = np.asarray(assignments)
    E = np.asarray(E)
    if np.any(idx < 0) or np.any(idx >= E.shape[0]):
        raise ValueError("assignments out of range")
    M = E[idx].astype(np.float64)        # (D, B)
    A = M.T @ M
    rhs = M.T @ x
    B = E.shape[1]
    alphas = None
    if np.linalg.matrix_rank(A) == B:
        alphas = np.linalg.solve(A, rhs)
    if alphas is None or not np.all(np.isfinite(alphas)):
        span = float(np.max(np.abs(x))) if x.size else 0.0
        halving = 0.5 ** np.arange(B)
        alphas = halving * (span / np.sum(halving)) if span > 0 else np.full(B, ALPHA_EPS)
    return project_alphas(alphas)


def init_quantizer(w: np.ndarray, B: int, max_iters: int = 100) -> QuantizerParams:
    """Full initialization pipeline for one kernel: scales, k-means levels,
    midpoint thresholds, fitted branch scales."""
    w = np.asarray(w, dtype=np.float64).ravel()
    E = sign_matrix(B)
    if w.shape[0] < E.shape[0]:
        raise ValueError(f"need at least {E.shape[0]} weights for B={B}, got {w.shape[0]}")
    gamma1, gamma2 = init_scales(w)
    km = kmeans_1d(gamma1 * w, E.shape[0], max_iters=max_iters)
    thresholds = init_thresholds(km.centroids)
    alphas = fit_alphas(gamma1 * w, km.assignments, E)
    return QuantizerParams(alphas=alphas, gamma1=gamma1, gamma2=gamma2,
                           thresholds=thresholds)
