# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: same-padded convolution (im2col + BLAS dgemm), 2x2 max pooling and the
all-pairs hinge coefficient matrix.

Loops accumulate in a fixed order so results are bitwise reproducible from
run to run (they are not bitwise equal to the NumPy fallback, whose BLAS
reductions associate differently).
"""
import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NAME = "cython"


cdef void _im2col(const double* xn, Py_ssize_t c, Py_ssize_t h, Py_ssize_t wd,
                  double* cols, Py_ssize_t k) noexcept nogil:
    # cols is (C*k*k, H*W) row-major; out-of-image taps are zero
    cdef Py_ssize_t p = k // 2
    cdef Py_ssize_t ci, ki, kj, i, j, di, dj, i0, i1, j0, j1
    cdef double* row
    cdef const double* src
    for ci in range(c):
        for ki in range(k):
            di = ki - p
            i0 = 0 if di >= 0 else -di
            i1 = h - di if di > 0 else h
            for kj in range(k):
                dj = kj - p
                j0 = 0 if dj >= 0 else -dj
                j1 = wd - dj if dj > 0 else wd
                row = cols + ((ci * k + ki) * k + kj) * h * wd
                for i in range(h):
                    if i < i0 or i >= i1:
                        for j in range(wd):
                            row[i * wd + j] = 0.0
                        continue
                    src = xn + (ci * h + i + di) * wd
                    for j in range(j0):
                        row[i * wd + j] = 0.0
                    for j in range(j0, j1):
                        row[i * wd + j] = src[j + dj]
                    for j in range(j1, wd):
                        row[i * wd + j] = 0.0


cdef void _col2im(const double* cols, double* dxn, Py_ssize_t c, Py_ssize_t h,
                  Py_ssize_t wd, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t p = k // 2
    cdef Py_ssize_t ci, ki, kj, i, j, di, dj, i0, i1, j0, j1
    cdef const double* row
    cdef double* dst
    for ci in range(c):
        for ki in range(k):
            di = ki - p
            i0 = 0 if di >= 0 else -di
            i1 = h - di if di > 0 else h
            for kj in range(k):
                dj = kj - p
                j0 = 0 if dj >= 0 else -dj
                j1 = wd - dj if dj > 0 else wd
                row = cols + ((ci * k + ki) * k + kj) * h * wd
                for i in range(i0, i1):
                    dst = dxn + (ci * h + i + di) * wd
                    for j in range(j0, j1):
                        dst[j + dj] += row[i * wd + j]


cdef void _gemm(char* ta, char* tb, int m, int n, int kk, double alpha,
                const double* a, int lda, const double* b, int ldb,
                double beta, double* c, int ldc) noexcept nogil:
    # row-major C(m, n) = alpha * op(A) op(B) + beta * C, via column-major BLAS on the transposes
    dgemm(tb, ta, &n, &m, &kk, &alpha, <double*>b, &ldb, <double*>a, &lda, &beta, c, &ldc)


def conv2d_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] w, double[::1] b):
    """Same-padded stride-1 convolution, one im2col + GEMM per image."""
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t f = w.shape[0], k = w.shape[2]
    cdef int ckk = <int>(c * k * k), hw = <int>(h * wd), fi_ = <int>f
    cdef Py_ssize_t ni, fi, q
    out = np.empty((n, f, h, wd), dtype=np.float64)
    cols_arr = np.empty((ckk, hw), dtype=np.float64)
    cdef double[:, :, :, ::1] y = out
    cdef double[:, ::1] cols = cols_arr
    cdef double* yp
    with nogil:
        for ni in range(n):
            yp = &y[ni, 0, 0, 0]
            for fi in range(f):
                for q in range(hw):
                    yp[fi * hw + q] = b[fi]
            _im2col(&x[ni, 0, 0, 0], c, h, wd, &cols[0, 0], k)
            _gemm(b"N", b"N", fi_, hw, ckk, 1.0, &w[0, 0, 0, 0], ckk,
                  &cols[0, 0], hw, 1.0, yp, hw)
    return out


def conv2d_backward(double[:, :, :, ::1] dy, double[:, :, :, ::1] x, double[:, :, :, ::1] w):
    """Gradients of :func:`conv2d_forward`. Returns (dx, dw, db)."""
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t f = w.shape[0], k = w.shape[2]
    cdef int ckk = <int>(c * k * k), hw = <int>(h * wd), fi_ = <int>f
    cdef Py_ssize_t ni, fi, q
    cdef double acc
    dx_arr = np.zeros((n, c, h, wd), dtype=np.float64)
    dw_arr = np.zeros((f, c, k, k), dtype=np.float64)
    db_arr = np.zeros(f, dtype=np.float64)
    cols_arr = np.empty((ckk, hw), dtype=np.float64)
    dcols_arr = np.empty((ckk, hw), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef double[:, ::1] cols = cols_arr
    cdef double[:, ::1] dcols = dcols_arr
    cdef const double* dyp
    with nogil:
        for ni in range(n):
            dyp = &dy[ni, 0, 0, 0]
            for fi in range(f):
                acc = 0.0
                for q in range(hw):
                    acc = acc + dyp[fi * hw + q]
                db[fi] += acc
            _im2col(&x[ni, 0, 0, 0], c, h, wd, &cols[0, 0], k)
            # dW += dY_n (f, hw) . cols^T (hw, ckk)
            _gemm(b"N", b"T", fi_, ckk, hw, 1.0, dyp, hw, &cols[0, 0], hw,
                  1.0, &dw[0, 0, 0, 0], ckk)
            # dcols = W^T (ckk, f) . dY_n (f, hw)
            _gemm(b"T", b"N", ckk, hw, fi_, 1.0, &w[0, 0, 0, 0], ckk, dyp, hw,
                  0.0, &dcols[0, 0], hw)
            _col2im(&dcols[0, 0], &dx[ni, 0, 0, 0], c, h, wd, k)
    return dx_arr, dw_arr, db_arr


def maxpool2_forward(double[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h2 = x.shape[2] // 2, w2 = x.shape[3] // 2
    cdef Py_ssize_t ni, ci, i, j, q, best
    cdef double v, m
    out = np.empty((n, c, h2, w2), dtype=np.float64)
    idx_arr = np.empty((n, c, h2, w2), dtype=np.int64)
    cdef double[:, :, :, ::1] y = out
    cdef cnp.int64_t[:, :, :, ::1] idx = idx_arr
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for i in range(h2):
                    for j in range(w2):
                        # first maximum wins, matching numpy argmax
                        m = x[ni, ci, 2 * i, 2 * j]
                        best = 0
                        for q in range(1, 4):
                            v = x[ni, ci, 2 * i + q // 2, 2 * j + q % 2]
                            if v > m:
                                m = v
                                best = q
                        y[ni, ci, i, j] = m
                        idx[ni, ci, i, j] = best
    return out, idx_arr


def maxpool2_backward(double[:, :, :, ::1] dy, cnp.int64_t[:, :, :, ::1] idx):
    cdef Py_ssize_t n = dy.shape[0], c = dy.shape[1], h2 = dy.shape[2], w2 = dy.shape[3]
    cdef Py_ssize_t ni, ci, i, j, q
    dx_arr = np.zeros((n, c, 2 * h2, 2 * w2), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for i in range(h2):
                    for j in range(w2):
                        q = idx[ni, ci, i, j]
                        dx[ni, ci, 2 * i + q // 2, 2 * j + q % 2] = dy[ni, ci, i, j]
    return dx_arr


def pair_coefficients(scores, labels, double margin):
    cdef double[::1] s = np.ascontiguousarray(scores, dtype=np.float64)
    cdef double[:, ::1] lab = np.ascontiguousarray(labels, dtype=np.float64)
    cdef Py_ssize_t m = s.shape[0], i, j
    cdef double z, l, loss = 0.0
    cdef long active = 0
    a_arr = np.zeros((m, m), dtype=np.float64)
    cdef double[:, ::1] a = a_arr
    with nogil:
        for i in range(m):
            for j in range(m):
                l = lab[i, j]
                if l == 0.0 or i == j:
                    continue
                z = l * (s[i] - s[j]) + margin
                if z > 0.0:
                    a[i, j] = l
                    if j > i:
                        loss += z
                        active += 1
    return a_arr, loss, active
