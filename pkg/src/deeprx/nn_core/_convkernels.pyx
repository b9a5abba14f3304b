# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled 1-D convolution kernels (direct loops, OpenMP over the batch).

Same contracts as deeprx.nn_core._npkernels; float32 and float64 supported.
Loops are ordered so inner accesses run over the contiguous channel axis.
Each output element is produced by exactly one thread with a fixed-order
inner sum, so results are independent of the thread count.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from cython.parallel cimport prange

ctypedef fused real:
    float
    double


def conv1d_forward(cnp.ndarray x_arr, cnp.ndarray w_arr, cnp.ndarray b_arr):
    x_arr = np.ascontiguousarray(x_arr)
    w_arr = np.ascontiguousarray(w_arr, dtype=x_arr.dtype)
    b_arr = np.ascontiguousarray(b_arr, dtype=x_arr.dtype)
    out = np.empty((x_arr.shape[0], x_arr.shape[1], w_arr.shape[2]), dtype=x_arr.dtype)
    if x_arr.dtype == np.float32:
        _fwd[float](x_arr, w_arr, b_arr, out)
    elif x_arr.dtype == np.float64:
        _fwd[double](x_arr, w_arr, b_arr, out)
    else:
        raise TypeError("conv1d_forward supports float32/float64 only")
    return out


def conv1d_backward(cnp.ndarray x_arr, cnp.ndarray w_arr, cnp.ndarray gy_arr):
    x_arr = np.ascontiguousarray(x_arr)
    w_arr = np.ascontiguousarray(w_arr, dtype=x_arr.dtype)
    gy_arr = np.ascontiguousarray(gy_arr, dtype=x_arr.dtype)
    gx = np.zeros_like(x_arr)
    gb = gy_arr.sum(axis=(0, 1))
    # one private kernel-gradient buffer per batch row avoids races; the
    # final reduction over the batch axis runs in fixed order
    gw_parts = np.zeros(
        (x_arr.shape[0], w_arr.shape[0], w_arr.shape[1], w_arr.shape[2]), dtype=x_arr.dtype
    )
    if x_arr.dtype == np.float32:
        _bwd[float](x_arr, w_arr, gy_arr, gx, gw_parts)
    elif x_arr.dtype == np.float64:
        _bwd[double](x_arr, w_arr, gy_arr, gx, gw_parts)
    else:
        raise TypeError("conv1d_backward supports float32/float64 only")
    gw = gw_parts.sum(axis=0)
    return gx, gw, gb


cdef void _fwd(real[:, :, ::1] x, real[:, :, ::1] w, real[::1] b, real[:, :, ::1] out) noexcept:
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], C = x.shape[2]
    cdef Py_ssize_t P = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t off = (P - 1) // 2
    cdef Py_ssize_t bi, i, p, c, k, src
    cdef real xv
    for bi in prange(B, nogil=True, schedule='static'):
        for i in range(H):
            for k in range(K):
                out[bi, i, k] = b[k]
            for p in range(P):
                src = i + p - off
                if 0 <= src < H:
                    for c in range(C):
                        xv = x[bi, src, c]
                        for k in range(K):
                            out[bi, i, k] = out[bi, i, k] + w[p, c, k] * xv


cdef void _bwd(real[:, :, ::1] x, real[:, :, ::1] w, real[:, :, ::1] gy,
               real[:, :, ::1] gx, real[:, :, :, ::1] gw_parts) noexcept:
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], C = x.shape[2]
    cdef Py_ssize_t P = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t off = (P - 1) // 2
    cdef Py_ssize_t bi, i, p, c, k, src
    cdef real acc, xv
    for bi in prange(B, nogil=True, schedule='static'):
        # grad wrt input: gx[i, c] = sum_{p,k} w[p, c, k] * gy[i - p + off, k]
        for i in range(H):
            for c in range(C):
                gx[bi, i, c] = 0
            for p in range(P):
                src = i - p + off
                if 0 <= src < H:
                    for c in range(C):
                        acc = 0
                        for k in range(K):
                            acc = acc + w[p, c, k] * gy[bi, src, k]
                        gx[bi, i, c] = gx[bi, i, c] + acc
        # grad wrt kernel, one private slice per batch row
        for i in range(H):
            for p in range(P):
                src = i + p - off
                if 0 <= src < H:
                    for c in range(C):
                        xv = x[bi, src, c]
                        for k in range(K):
                            gw_parts[bi, p, c, k] = gw_parts[bi, p, c, k] + xv * gy[bi, i, k]
