# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for coordinate-structured least squares.

Every reduction runs in a fixed index order so results do not depend on how
callers split work across threads. The pure-numpy twin lives in
``_kernels_py``; both expose the same functions.
"""

import numpy as np

from libc.math cimport fabs

ctypedef long long idx_t


cdef inline double _prox_scalar(double v, double t, double lo, double hi) noexcept nogil:
    if v > t:
        v = v - t
    elif v < -t:
        v = v + t
    else:
        v = 0.0
    if v < lo:
        v = lo
    elif v > hi:
        v = hi
    return v


def prox_l1_box(const double[::1] z, const double[::1] thresh, double lo, double hi,
                double[::1] out):
    """out[k] = clip(soft(z[k], thresh[k]), lo, hi)."""
    cdef Py_ssize_t k, n = z.shape[0]
    with nogil:
        for k in range(n):
            out[k] = _prox_scalar(z[k], thresh[k], lo, hi)
    return np.asarray(out)


cdef inline double _col_dot(const double[::1, :] a, idx_t c, const double[::1] r) noexcept nogil:
    cdef Py_ssize_t i, m = a.shape[0]
    cdef Py_ssize_t m4 = m - m % 4
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    i = 0
    while i < m4:
        s0 += a[i, c] * r[i]
        s1 += a[i + 1, c] * r[i + 1]
        s2 += a[i + 2, c] * r[i + 2]
        s3 += a[i + 3, c] * r[i + 3]
        i += 4
    while i < m:
        s0 += a[i, c] * r[i]
        i += 1
    return (s0 + s1) + (s2 + s3)


cdef inline double _csc_dot(const double[::1] data, const idx_t[::1] indices,
                            const idx_t[::1] indptr, idx_t c,
                            const double[::1] r) noexcept nogil:
    cdef idx_t p
    cdef double s = 0.0
    for p in range(indptr[c], indptr[c + 1]):
        s += data[p] * r[indices[p]]
    return s


def gather_dot(const double[::1, :] a, const idx_t[::1] cols, const double[::1] r,
               double[::1] out):
    """out[k] = a[:, cols[k]] . r for a Fortran-ordered dense matrix."""
    cdef Py_ssize_t k, nc = cols.shape[0]
    with nogil:
        for k in range(nc):
            out[k] = _col_dot(a, cols[k], r)
    return np.asarray(out)


def scatter_axpy(const double[::1, :] a, const idx_t[::1] cols, const double[::1] delta,
                 double[::1] r):
    """r += sum_k a[:, cols[k]] * delta[k], columns applied in order."""
    cdef Py_ssize_t k, i, m = a.shape[0], nc = cols.shape[0]
    cdef idx_t c
    cdef double d
    with nogil:
        for k in range(nc):
            d = delta[k]
            if d == 0.0:
                continue
            c = cols[k]
            for i in range(m):
                r[i] += a[i, c] * d


def gather_dot_csc(const double[::1] data, const idx_t[::1] indices, const idx_t[::1] indptr,
                   const idx_t[::1] cols, const double[::1] r, double[::1] out):
    cdef Py_ssize_t k, nc = cols.shape[0]
    with nogil:
        for k in range(nc):
            out[k] = _csc_dot(data, indices, indptr, cols[k], r)
    return np.asarray(out)


def scatter_axpy_csc(const double[::1] data, const idx_t[::1] indices, const idx_t[::1] indptr,
                     const idx_t[::1] cols, const double[::1] delta, double[::1] r):
    cdef Py_ssize_t k
    cdef idx_t c, p
    cdef double d
    with nogil:
        for k in range(cols.shape[0]):
            d = delta[k]
            if d == 0.0:
                continue
            c = cols[k]
            for p in range(indptr[c], indptr[c + 1]):
                r[indices[p]] += data[p] * d


def cd_sweep(const double[::1, :] a, const double[::1] colsq, const idx_t[::1] coords,
             double[::1] x, double[::1] r, double lam, double lo, double hi,
             double fval, double gval, double[::1] obj_out, double[::1] upd_out):
    """Exact coordinate minimization of 0.5||r||^2 + lam*||x||_1 over a box.

    Visits ``coords`` in order, keeping ``r = a @ x - b`` current. Writes the
    objective before each update into ``obj_out`` and the squared move into
    ``upd_out``. Returns the running ``(fval, gval)`` pair.
    """
    cdef Py_ssize_t k, i, m = a.shape[0]
    cdef idx_t j
    cdef double g, c, xo, xn, d
    with nogil:
        for k in range(coords.shape[0]):
            j = coords[k]
            obj_out[k] = fval + gval
            g = _col_dot(a, j, r)
            c = colsq[j]
            xo = x[j]
            if c > 0.0:
                xn = _prox_scalar(xo - g / c, lam / c, lo, hi)
            else:
                xn = _prox_scalar(0.0, 0.0, lo, hi)
            d = xn - xo
            upd_out[k] = d * d
            if d != 0.0:
                for i in range(m):
                    r[i] += a[i, j] * d
                fval += d * g + 0.5 * d * d * c
                gval += lam * (fabs(xn) - fabs(xo))
                x[j] = xn
    return fval, gval


def cd_sweep_csc(const double[::1] data, const idx_t[::1] indices, const idx_t[::1] indptr,
                 const double[::1] colsq, const idx_t[::1] coords,
                 double[::1] x, double[::1] r, double lam, double lo, double hi,
                 double fval, double gval, double[::1] obj_out, double[::1] upd_out):
    cdef Py_ssize_t k
    cdef idx_t j, p
    cdef double g, c, xo, xn, d
    with nogil:
        for k in range(coords.shape[0]):
            j = coords[k]
            obj_out[k] = fval + gval
            g = _csc_dot(data, indices, indptr, j, r)
            c = colsq[j]
            xo = x[j]
            if c > 0.0:
                xn = _prox_scalar(xo - g / c, lam / c, lo, hi)
            else:
                xn = _prox_scalar(0.0, 0.0, lo, hi)
            d = xn - xo
            upd_out[k] = d * d
            if d != 0.0:
                for p in range(indptr[j], indptr[j + 1]):
                    r[indices[p]] += data[p] * d
                fval += d * g + 0.5 * d * d * c
                gval += lam * (fabs(xn) - fabs(xo))
                x[j] = xn
    return fval, gval


def cd_sweep_hess(const double[::1, :] h, const idx_t[::1] coords, double[::1] x,
                  double[::1] grad, double lam, double lo, double hi,
                  double fval, double gval, double[::1] obj_out, double[::1] upd_out):
    """Same as ``cd_sweep`` for f = 0.5 x'Hx + c'x, keeping ``grad = Hx + c``."""
    cdef Py_ssize_t k, i, n = h.shape[0]
    cdef idx_t j
    cdef double g, c, xo, xn, d
    with nogil:
        for k in range(coords.shape[0]):
            j = coords[k]
            obj_out[k] = fval + gval
            g = grad[j]
            c = h[j, j]
            xo = x[j]
            if c > 0.0:
                xn = _prox_scalar(xo - g / c, lam / c, lo, hi)
            else:
                xn = _prox_scalar(0.0, 0.0, lo, hi)
            d = xn - xo
            upd_out[k] = d * d
            if d != 0.0:
                for i in range(n):
                    grad[i] += h[i, j] * d
                fval += d * g + 0.5 * d * d * c
                gval += lam * (fabs(xn) - fabs(xo))
                x[j] = xn
    return fval, gval
