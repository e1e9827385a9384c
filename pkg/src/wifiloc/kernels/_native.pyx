# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel backend.

Mirrors ``wifiloc.kernels._numpy`` (the reference definitions live
there). Elementwise kernels follow the exact operation order of the
NumPy backend so results match bit for bit; reduction kernels agree to
rounding. Single-threaded by design so results never depend on a worker
count.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt
from libc.math cimport tanh as c_tanh

cnp.import_array()


def relu(const double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    out_arr = np.empty((n, d))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for j in range(d):
                out[i, j] = x[i, j] if x[i, j] > 0.0 else 0.0
    return out_arr


def relu_backward(const double[:, ::1] grad, const double[:, ::1] pre):
    cdef Py_ssize_t n = grad.shape[0], d = grad.shape[1], i, j
    out_arr = np.empty((n, d))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for j in range(d):
                out[i, j] = grad[i, j] if pre[i, j] > 0.0 else 0.0
    return out_arr


def tanh_forward(const double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    out_arr = np.empty((n, d))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for j in range(d):
                out[i, j] = c_tanh(x[i, j])
    return out_arr


def tanh_backward(const double[:, ::1] grad, const double[:, ::1] out_vals):
    cdef Py_ssize_t n = grad.shape[0], d = grad.shape[1], i, j
    out_arr = np.empty((n, d))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for j in range(d):
                out[i, j] = grad[i, j] * (1.0 - out_vals[i, j] * out_vals[i, j])
    return out_arr


def dropout_apply(const double[:, ::1] x, const double[:, ::1] draws, double rate):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    cdef double scale = 1.0 / (1.0 - rate)
    out_arr = np.empty((n, d))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for j in range(d):
                out[i, j] = x[i, j] * scale if draws[i, j] >= rate else 0.0
    return out_arr


def dropout_backward(const double[:, ::1] grad, const double[:, ::1] draws, double rate):
    cdef Py_ssize_t n = grad.shape[0], d = grad.shape[1], i, j
    cdef double scale = 1.0 / (1.0 - rate)
    out_arr = np.empty((n, d))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for j in range(d):
                out[i, j] = grad[i, j] * scale if draws[i, j] >= rate else 0.0
    return out_arr


def softmax(const double[:, ::1] logits):
    cdef Py_ssize_t n = logits.shape[0], c = logits.shape[1], i, j
    cdef double mx, s
    out_arr = np.empty((n, c))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            mx = logits[i, 0]
            for j in range(1, c):
                if logits[i, j] > mx:
                    mx = logits[i, j]
            s = 0.0
            for j in range(c):
                out[i, j] = exp(logits[i, j] - mx)
                s += out[i, j]
            for j in range(c):
                out[i, j] = out[i, j] / s
    return out_arr


def softmax_xent(const double[:, ::1] logits, const cnp.int64_t[::1] labels):
    cdef Py_ssize_t n = logits.shape[0], c = logits.shape[1], i, j
    cdef double mx, s, loss = 0.0, nd = <double> n
    grad_arr = np.empty((n, c))
    cdef double[:, ::1] grad = grad_arr
    with nogil:
        for i in range(n):
            mx = logits[i, 0]
            for j in range(1, c):
                if logits[i, j] > mx:
                    mx = logits[i, j]
            s = 0.0
            for j in range(c):
                grad[i, j] = exp(logits[i, j] - mx)
                s += grad[i, j]
            loss += log(s) - (logits[i, labels[i]] - mx)
            for j in range(c):
                grad[i, j] = grad[i, j] / s
            grad[i, labels[i]] -= 1.0
            for j in range(c):
                grad[i, j] = grad[i, j] / nd
    return loss / nd, grad_arr


def adam_update(double[::1] p, const double[::1] g, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps,
                double bc1, double bc2):
    cdef Py_ssize_t k = p.shape[0], i
    cdef double omb1 = 1.0 - beta1, omb2 = 1.0 - beta2, mi, vi
    with nogil:
        for i in range(k):
            mi = beta1 * m[i] + omb1 * g[i]
            vi = beta2 * v[i] + omb2 * (g[i] * g[i])
            m[i] = mi
            v[i] = vi
            p[i] -= lr * (mi / bc1) / (sqrt(vi / bc2) + eps)


def sq_dists(const double[:, ::1] queries, const double[:, ::1] refs):
    cdef Py_ssize_t m = queries.shape[0], n = refs.shape[0], d = queries.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    out_arr = np.empty((m, n))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(m):
            for j in range(n):
                acc = 0.0
                for k in range(d):
                    diff = queries[i, k] - refs[j, k]
                    acc += diff * diff
                out[i, j] = acc
    return out_arr
