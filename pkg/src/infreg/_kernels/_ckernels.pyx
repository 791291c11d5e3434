# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused elementwise kernels for the training hot loop.

One pass per call, no numpy temporaries. Signatures mirror
`_pykernels`; dense matmul stays with BLAS in both backends.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt, tanh

cnp.import_array()


def tanh_fwd(cnp.ndarray x):
    cdef cnp.ndarray out = np.empty_like(x)
    cdef double[::1] xv = x.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = tanh(xv[i])
    return out


def sigmoid_fwd(cnp.ndarray x):
    cdef cnp.ndarray out = np.empty_like(x)
    cdef double[::1] xv = x.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double e
    with nogil:
        for i in range(n):
            if xv[i] >= 0.0:
                ov[i] = 1.0 / (1.0 + exp(-xv[i]))
            else:
                e = exp(xv[i])
                ov[i] = e / (1.0 + e)
    return out


def relu_fwd(cnp.ndarray x):
    cdef cnp.ndarray out = np.empty_like(x)
    cdef double[::1] xv = x.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = xv[i] if xv[i] > 0.0 else 0.0
    return out


def tanh_bwd_acc(cnp.ndarray grad_out, cnp.ndarray y, cnp.ndarray grad_acc):
    cdef double[::1] gv = grad_out.ravel()
    cdef double[::1] yv = y.ravel()
    cdef double[::1] av = grad_acc.ravel()
    cdef Py_ssize_t i, n = gv.shape[0]
    with nogil:
        for i in range(n):
            av[i] += gv[i] * (1.0 - yv[i] * yv[i])


def sigmoid_bwd_acc(cnp.ndarray grad_out, cnp.ndarray y, cnp.ndarray grad_acc):
    cdef double[::1] gv = grad_out.ravel()
    cdef double[::1] yv = y.ravel()
    cdef double[::1] av = grad_acc.ravel()
    cdef Py_ssize_t i, n = gv.shape[0]
    with nogil:
        for i in range(n):
            av[i] += gv[i] * yv[i] * (1.0 - yv[i])


def relu_bwd_acc(cnp.ndarray grad_out, cnp.ndarray y, cnp.ndarray grad_acc):
    cdef double[::1] gv = grad_out.ravel()
    cdef double[::1] yv = y.ravel()
    cdef double[::1] av = grad_acc.ravel()
    cdef Py_ssize_t i, n = gv.shape[0]
    with nogil:
        for i in range(n):
            if yv[i] > 0.0:
                av[i] += gv[i]


def adam_update(cnp.ndarray p, cnp.ndarray g, cnp.ndarray m, cnp.ndarray v,
                double lr, double beta1, double beta2, double eps,
                double bc1, double bc2):
    cdef double[::1] pv = p.ravel()
    cdef double[::1] gv = g.ravel()
    cdef double[::1] mv = m.ravel()
    cdef double[::1] vv = v.ravel()
    cdef Py_ssize_t i, n = pv.shape[0]
    with nogil:
        for i in range(n):
            mv[i] = beta1 * mv[i] + (1.0 - beta1) * gv[i]
            vv[i] = beta2 * vv[i] + (1.0 - beta2) * gv[i] * gv[i]
            pv[i] -= lr * (mv[i] / bc1) / (sqrt(vv[i] / bc2) + eps)
