"""Pure-numpy implementations of the compiled kernels.

Signatures match ``_kernels.pyx``. Results agree with the compiled versions
to rounding (dot products go through BLAS here), and each function is
deterministic for fixed inputs.
"""

import numpy as np


def prox_l1_box(z, thresh, lo, hi, out):
    np.copyto(out, np.where(z > thresh, z - thresh, np.where(z < -thresh, z + thresh, 0.0)))
    np.clip(out, lo, hi, out=out)
    return out


def gather_dot(a, cols, r, out):
    out[:] = a[:, cols].T @ r
    return out


def scatter_axpy(a, cols, delta, r):
    nz = delta != 0.0
    if nz.any():
        r += a[:, cols[nz]] @ delta[nz]


def gather_dot_csc(data, indices, indptr, cols, r, out):
    for k, c in enumerate(cols):
        lo, hi = indptr[c], indptr[c + 1]
        out[k] = data[lo:hi] @ r[indices[lo:hi]]
    return out


def scatter_axpy_csc(data, indices, indptr, cols, delta, r):
    for c, d in zip(cols, delta):
        if d != 0.0:
            lo, hi = indptr[c], indptr[c + 1]
            np.add.at(r, indices[lo:hi], data[lo:hi] * d)


def _prox_scalar(v, t, lo, hi):
    if v > t:
        v = v - t
    elif v < -t:
        v = v + t
    else:
        v = 0.0
    return min(max(v, lo), hi)


def _sweep(coords, x, colsq, lam, lo, hi, fval, gval, obj_out, upd_out, dot, axpy):
    for k, j in enumerate(coords):
        obj_out[k] = fval + gval
        g = dot(j)
        c = colsq[j]
        xo = x[j]
        xn = _prox_scalar(xo - g / c, lam / c, lo, hi) if c > 0.0 else _prox_scalar(0.0, 0.0, lo, hi)
        d = xn - xo
        upd_out[k] = d * d
        if d != 0.0:
            axpy(j, d)
            fval += d * g + 0.5 * d * d * c
            gval += lam * (abs(xn) - abs(xo))
            x[j] = xn
    return fval, gval


def cd_sweep(a, colsq, coords, x, r, lam, lo, hi, fval, gval, obj_out, upd_out):
    def dot(j):
        return float(a[:, j] @ r)

    def axpy(j, d):
        r[:] += a[:, j] * d

    return _sweep(coords, x, colsq, lam, lo, hi, fval, gval, obj_out, upd_out, dot, axpy)


def cd_sweep_csc(data, indices, indptr, colsq, coords, x, r, lam, lo, hi, fval, gval,
                 obj_out, upd_out):
    def dot(j):
        s, e = indptr[j], indptr[j + 1]
        return float(data[s:e] @ r[indices[s:e]])

    def axpy(j, d):
        s, e = indptr[j], indptr[j + 1]
        np.add.at(r, indices[s:e], data[s:e] * d)

    return _sweep(coords, x, colsq, lam, lo, hi, fval, gval, obj_out, upd_out, dot, axpy)


def cd_sweep_hess(h, coords, x, grad, lam, lo, hi, fval, gval, obj_out, upd_out):
    diag = np.diagonal(h)

    def dot(j):
        return float(grad[j])

    def axpy(j, d):
        grad[:] += h[:, j] * d

    return _sweep(coords, x, diag, lam, lo, hi, fval, gval, obj_out, upd_out, dot, axpy)
