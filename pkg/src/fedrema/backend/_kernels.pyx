# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled dense-layer kernels.

Same API as ``numpy_backend``. Matrix products go straight to BLAS
dgemm (skipping the Python-level dispatch of the numpy expressions);
elementwise work runs as tight typed loops. Selected automatically at
import when the extension is built.
"""

import numpy as np

cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

BACKEND = "compiled"


cdef inline void _gemm(char ta, char tb, int m, int n, int k,
                       double* a, int lda, double* b, int ldb,
                       double beta, double* c, int ldc) noexcept nogil:
    cdef double alpha = 1.0
    dgemm(&ta, &tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


def affine(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    """y = x @ w.T + b for x (n, in), w (out, in), b (out,)."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d_in = x.shape[1]
    cdef Py_ssize_t d_out = w.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, d_out))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    # row-major y (n, d_out) is column-major y^T (d_out, n):
    # y^T = (w^T)^T @ x^T
    with nogil:
        _gemm(b'T', b'N', <int>d_out, <int>n, <int>d_in,
              &w[0, 0], <int>d_in, &x[0, 0], <int>d_in, 0.0,
              &y[0, 0], <int>d_out)
        for i in range(n):
            for j in range(d_out):
                y[i, j] += b[j]
    return out


def affine_param_grads(double[:, ::1] x, double[:, ::1] dy):
    """(dw, db) with dw = dy.T @ x and db = dy.sum(axis=0)."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d_in = x.shape[1]
    cdef Py_ssize_t d_out = dy.shape[1]
    cdef cnp.ndarray[double, ndim=2] dw_arr = np.empty((d_out, d_in))
    cdef cnp.ndarray[double, ndim=1] db_arr = np.zeros(d_out)
    cdef double[:, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef Py_ssize_t i, j
    with nogil:
        # dw^T (d_in, d_out) = x^T @ (dy^T)^T
        _gemm(b'N', b'T', <int>d_in, <int>d_out, <int>n,
              &x[0, 0], <int>d_in, &dy[0, 0], <int>d_out, 0.0,
              &dw[0, 0], <int>d_in)
        for i in range(n):
            for j in range(d_out):
                db[j] += dy[i, j]
    return dw_arr, db_arr


def affine_input_grad(double[:, ::1] dy, double[:, ::1] w):
    """dx = dy @ w."""
    cdef Py_ssize_t n = dy.shape[0]
    cdef Py_ssize_t d_out = w.shape[0]
    cdef Py_ssize_t d_in = w.shape[1]
    cdef cnp.ndarray[double, ndim=2] dx_arr = np.empty((n, d_in))
    cdef double[:, ::1] dx = dx_arr
    with nogil:
        # dx^T (d_in, n) = w^T @ dy^T
        _gemm(b'N', b'N', <int>d_in, <int>n, <int>d_out,
              &w[0, 0], <int>d_in, &dy[0, 0], <int>d_out, 0.0,
              &dx[0, 0], <int>d_in)
    return dx_arr


def relu(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, m))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(m):
                y[i, j] = x[i, j] if x[i, j] > 0.0 else 0.0
    return out


def relu_grad(double[:, ::1] pre, double[:, ::1] dy):
    cdef Py_ssize_t n = pre.shape[0]
    cdef Py_ssize_t m = pre.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, m))
    cdef double[:, ::1] dx = out
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(m):
                dx[i, j] = dy[i, j] if pre[i, j] > 0.0 else 0.0
    return out


def sgd_update(param, grad, double lr):
    cdef double[::1] p = param.reshape(-1)
    cdef double[::1] g = np.ascontiguousarray(grad, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t i
    with nogil:
        for i in range(p.shape[0]):
            p[i] -= lr * g[i]
