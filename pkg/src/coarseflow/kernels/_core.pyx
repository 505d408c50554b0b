# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled 3x3 convolution kernels (stride 1, zero padding 1).

Direct convolution over an internally padded copy: the inner loops are
branch-free contiguous AXPY/dot passes that the C compiler vectorizes, and no
im2col scratch matrix is materialized. Single-threaded by construction, so
results are bit-identical regardless of the host's thread count.
"""

import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double


cdef inline void _pad_into(real[:, :, :, ::1] x, real[:, :, :, ::1] xp) noexcept nogil:
    cdef Py_ssize_t b, c, i, j
    cdef Py_ssize_t bn = x.shape[0], cn = x.shape[1], hn = x.shape[2], wn = x.shape[3]
    for b in range(bn):
        for c in range(cn):
            for i in range(hn):
                for j in range(wn):
                    xp[b, c, i + 1, j + 1] = x[b, c, i, j]


def conv3x3_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] w):
    """x: (B, Cin, H, W); w: (Cout, Cin, 3, 3) -> (B, Cout, H, W)."""
    cdef Py_ssize_t bn = x.shape[0], cn = x.shape[1], hn = x.shape[2], wn = x.shape[3]
    cdef Py_ssize_t on = w.shape[0]
    if w.shape[1] != cn or w.shape[2] != 3 or w.shape[3] != 3:
        raise ValueError("weight shape mismatch")
    dtype = np.float32 if real is float else np.float64
    out_np = np.zeros((bn, on, hn, wn), dtype=dtype)
    xp_np = np.zeros((bn, cn, hn + 2, wn + 2), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_np
    cdef real[:, :, :, ::1] xp = xp_np
    cdef Py_ssize_t b, o, c, i, j, u, v
    cdef real wv
    cdef real * orow
    cdef real * xrow

    with nogil:
        _pad_into(x, xp)
        for b in range(bn):
            for o in range(on):
                for c in range(cn):
                    for u in range(3):
                        for v in range(3):
                            wv = w[o, c, u, v]
                            for i in range(hn):
                                orow = &out[b, o, i, 0]
                                xrow = &xp[b, c, i + u, v]
                                for j in range(wn):
                                    orow[j] += wv * xrow[j]
    return out_np


def conv3x3_grad_weight(real[:, :, :, ::1] x, real[:, :, :, ::1] gy):
    """x: (B, Cin, H, W); gy: (B, Cout, H, W) -> (Cout, Cin, 3, 3)."""
    cdef Py_ssize_t bn = x.shape[0], cn = x.shape[1], hn = x.shape[2], wn = x.shape[3]
    cdef Py_ssize_t on = gy.shape[1]
    if gy.shape[0] != bn or gy.shape[2] != hn or gy.shape[3] != wn:
        raise ValueError("grad shape mismatch")
    dtype = np.float32 if real is float else np.float64
    gw_np = np.zeros((on, cn, 3, 3), dtype=dtype)
    xp_np = np.zeros((bn, cn, hn + 2, wn + 2), dtype=dtype)
    cdef real[:, :, :, ::1] gw = gw_np
    cdef real[:, :, :, ::1] xp = xp_np
    cdef Py_ssize_t b, o, c, i, j, u, v
    cdef real acc
    cdef real * grow
    cdef real * xrow

    with nogil:
        _pad_into(x, xp)
        for b in range(bn):
            for o in range(on):
                for c in range(cn):
                    for u in range(3):
                        for v in range(3):
                            acc = 0
                            for i in range(hn):
                                grow = &gy[b, o, i, 0]
                                xrow = &xp[b, c, i + u, v]
                                for j in range(wn):
                                    acc += grow[j] * xrow[j]
                            gw[o, c, u, v] += acc
    return gw_np
