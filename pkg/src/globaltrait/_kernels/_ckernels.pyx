# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the conv/max-pool and t-SNE kernels.

Signatures and results match ``_fallback`` exactly up to floating point
summation order.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log

cnp.import_array()


def conv_maxpool_forward(double[:, :, ::1] E, double[:, :, ::1] W, double[::1] b):
    cdef Py_ssize_t B = E.shape[0], T = E.shape[1], d = E.shape[2]
    cdef Py_ssize_t width = W.shape[0], F = W.shape[2]
    cdef Py_ssize_t P = T - width + 1
    if W.shape[1] != d or b.shape[0] != F:
        raise ValueError("shape mismatch between E, W and b")
    if P < 1:
        raise ValueError("sequence shorter than the window")
    pooled_np = np.empty((B, F), dtype=np.float64)
    pos_np = np.zeros((B, F), dtype=np.int64)
    acc_np = np.empty(F, dtype=np.float64)
    cdef double[:, ::1] pooled = pooled_np
    cdef long long[:, ::1] pos = pos_np
    cdef double[::1] acc = acc_np
    cdef Py_ssize_t bi, p, k, j, f
    cdef double e
    with nogil:
        for bi in range(B):
            for p in range(P):
                for f in range(F):
                    acc[f] = b[f]
                for k in range(width):
                    for j in range(d):
                        e = E[bi, p + k, j]
                        if e != 0.0:
                            for f in range(F):
                                acc[f] += e * W[k, j, f]
                for f in range(F):
                    if p == 0 or acc[f] > pooled[bi, f]:
                        pooled[bi, f] = acc[f]
                        pos[bi, f] = p
    return pooled_np, pos_np


def conv_maxpool_backward(double[:, :, ::1] E, double[:, :, ::1] W, long long[:, ::1] pos,
                          double[:, ::1] dpooled, bint need_input_grad=True):
    cdef Py_ssize_t B = E.shape[0], T = E.shape[1], d = E.shape[2]
    cdef Py_ssize_t width = W.shape[0], F = W.shape[2]
    dW_np = np.zeros((width, d, F), dtype=np.float64)
    db_np = np.zeros(F, dtype=np.float64)
    cdef double[:, :, ::1] dW = dW_np
    cdef double[::1] db = db_np
    cdef double[:, :, ::1] dE
    dE_np = None
    if need_input_grad:
        dE_np = np.zeros((B, T, d), dtype=np.float64)
        dE = dE_np
    cdef Py_ssize_t bi, k, j, f, p
    cdef double g
    with nogil:
        for bi in range(B):
            for f in range(F):
                g = dpooled[bi, f]
                if g == 0.0:
                    continue
                db[f] += g
                p = pos[bi, f]
                for k in range(width):
                    for j in range(d):
                        dW[k, j, f] += g * E[bi, p + k, j]
                if need_input_grad:
                    for k in range(width):
                        for j in range(d):
                            dE[bi, p + k, j] += g * W[k, j, f]
    return dW_np, db_np, dE_np


def tsne_gradient(double[:, ::1] Y, double[:, ::1] P):
    cdef Py_ssize_t n = Y.shape[0], i, j
    cdef double dx, dy, q, g, total = 0.0, kl = 0.0, pij, qij
    num_np = np.zeros((n, n), dtype=np.float64)
    grad_np = np.zeros((n, 2), dtype=np.float64)
    cdef double[:, ::1] num = num_np
    cdef double[:, ::1] grad = grad_np
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                dx = Y[i, 0] - Y[j, 0]
                dy = Y[i, 1] - Y[j, 1]
                q = 1.0 / (1.0 + dx * dx + dy * dy)
                num[i, j] = q
                num[j, i] = q
                total += 2.0 * q
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                q = num[i, j]
                qij = q / total
                pij = P[i, j]
                g = (pij - qij) * q
                grad[i, 0] += 4.0 * g * (Y[i, 0] - Y[j, 0])
                grad[i, 1] += 4.0 * g * (Y[i, 1] - Y[j, 1])
                if pij > 0:
                    if qij < 1e-300:
                        qij = 1e-300
                    kl += pij * log(pij / qij)
    return grad_np, kl
