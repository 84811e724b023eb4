# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled quantizer kernels.

Fused single-pass versions of the hot loops in ``_kernels_np``: the smooth
forward pass and the full analytical backward pass. Semantics match the
numpy reference; see that module for the contract.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()

BACKEND = "cython"


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def sigmoid(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    shape = x.shape
    cdef double[::1] xf = x.ravel()
    out = np.empty(xf.shape[0], dtype=np.float64)
    cdef double[::1] of = out
    cdef Py_ssize_t k
    for k in range(xf.shape[0]):
        of[k] = _sigmoid(xf[k])
    return out.reshape(shape)


def sigmoid_pair(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    shape = x.shape
    cdef double[::1] xf = x.ravel()
    g_arr = np.empty(xf.shape[0], dtype=np.float64)
    h_arr = np.empty(xf.shape[0], dtype=np.float64)
    cdef double[::1] gf = g_arr
    cdef double[::1] hf = h_arr
    cdef Py_ssize_t k
    cdef double e, denom, small, large
    for k in range(xf.shape[0]):
        e = exp(-fabs(xf[k]))
        denom = 1.0 + e
        small = e / denom
        large = 1.0 / denom
        gf[k] = large if xf[k] >= 0.0 else small
        hf[k] = small * large
    return g_arr.reshape(shape), h_arr.reshape(shape)


def forward_train(w, thresholds, step_coeffs, double alpha_sum,
                  double gamma1, double gamma2, double temp):
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] tv = np.ascontiguousarray(thresholds, dtype=np.float64)
    cdef double[::1] sv = np.ascontiguousarray(step_coeffs, dtype=np.float64)
    cdef Py_ssize_t D = wv.shape[0]
    cdef Py_ssize_t M = tv.shape[0]
    z = np.empty(D, dtype=np.float64)
    cdef double[::1] zv = z
    cdef Py_ssize_t k, i
    cdef double u, acc
    with nogil:
        for k in range(D):
            u = gamma1 * wv[k]
            acc = 0.0
            for i in range(M):
                acc += _sigmoid(temp * (u - tv[i])) * sv[i]
            zv[k] = gamma2 * (acc - alpha_sum)
    return z


def backward(w, upstream, thresholds, b_matrix, alphas,
             double gamma1, double gamma2, double temp):
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] uv = np.ascontiguousarray(upstream, dtype=np.float64)
    cdef double[::1] tv = np.ascontiguousarray(thresholds, dtype=np.float64)
    cdef double[:, ::1] bm = np.ascontiguousarray(b_matrix, dtype=np.float64)
    cdef double[::1] av = np.ascontiguousarray(alphas, dtype=np.float64)
    cdef Py_ssize_t D = wv.shape[0]
    cdef Py_ssize_t M = tv.shape[0]
    cdef Py_ssize_t B = av.shape[0]

    sc = np.ascontiguousarray(b_matrix, dtype=np.float64) @ \
        np.ascontiguousarray(alphas, dtype=np.float64)
    cdef double[::1] sv = sc
    cdef double alpha_sum = 0.0
    cdef Py_ssize_t j
    for j in range(B):
        alpha_sum += av[j]

    d_alphas = np.zeros(B, dtype=np.float64)
    d_thresholds = np.zeros(M, dtype=np.float64)
    d_weights = np.empty(D, dtype=np.float64)
    cdef double[::1] dav = d_alphas
    cdef double[::1] dtv = d_thresholds
    cdef double[::1] dwv = d_weights
    cdef double d_gamma1 = 0.0, d_gamma2 = 0.0, usum = 0.0
    cdef Py_ssize_t k, i
    cdef double x, e, denom, g, h, inner, hsum, up, un

    with nogil:
        for k in range(D):
            un = gamma1 * wv[k]
            up = uv[k]
            usum += up
            inner = -alpha_sum
            hsum = 0.0
            for i in range(M):
                x = temp * (un - tv[i])
                e = exp(-fabs(x))
                denom = 1.0 + e
                if x >= 0.0:
                    g = 1.0 / denom
                else:
                    g = e / denom
                h = (e / denom) * (1.0 / denom)
                inner += g * sv[i]
                hsum += h * sv[i]
                dtv[i] += up * h
                for j in range(B):
                    dav[j] += up * g * bm[i, j]
            d_gamma2 += up * inner
            dwv[k] = gamma1 * gamma2 * temp * up * hsum
            d_gamma1 += up * wv[k] * hsum
        for i in range(M):
            dtv[i] *= -(gamma2 * temp) * sv[i]
        for j in range(B):
            dav[j] = gamma2 * (dav[j] - usum)
    d_gamma1 *= gamma2 * temp
    return d_alphas, d_gamma1, d_gamma2, d_thresholds, d_weights
