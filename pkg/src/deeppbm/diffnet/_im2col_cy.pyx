# Compiled im2col/col2im. Semantics and accumulation order match
# _im2col_np exactly, so both backends produce bit-identical arrays.

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double


def im2col(real[:, :, :, ::1] x, int kernel, int stride, int padding):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int k = kernel, s = stride, p = padding
    cdef Py_ssize_t ho = (h + 2 * p - k) // s + 1
    cdef Py_ssize_t wo = (w + 2 * p - k) // s + 1
    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.zeros((n, c * k * k, ho * wo), dtype=dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t i_n, i_c, a, b, i, j, row, i_lo, i_hi, j_lo, j_hi, y
    with nogil:
        for i_n in range(n):
            for i_c in range(c):
                for a in range(k):
                    # valid output rows: 0 <= i*s + a - p < h
                    i_lo = 0 if a >= p else (p - a + s - 1) // s
                    i_hi = (h - 1 - a + p) // s + 1
                    if i_hi > ho:
                        i_hi = ho
                    for b in range(k):
                        j_lo = 0 if b >= p else (p - b + s - 1) // s
                        j_hi = (w - 1 - b + p) // s + 1
                        if j_hi > wo:
                            j_hi = wo
                        row = (i_c * k + a) * k + b
                        for i in range(i_lo, i_hi):
                            y = i * s + a - p
                            for j in range(j_lo, j_hi):
                                out[i_n, row, i * wo + j] = x[i_n, i_c, y, j * s + b - p]
    return out_arr


def col2im(real[:, :, ::1] cols, int kernel, int stride, int padding,
           Py_ssize_t height, Py_ssize_t width):
    cdef int k = kernel, s = stride, p = padding
    cdef Py_ssize_t ho = (height + 2 * p - k) // s + 1
    cdef Py_ssize_t wo = (width + 2 * p - k) // s + 1
    cdef Py_ssize_t n = cols.shape[0]
    cdef Py_ssize_t c = cols.shape[1] // (k * k)
    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.zeros((n, c, height, width), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t i_n, i_c, a, b, i, j, row, i_lo, i_hi, j_lo, j_hi, y
    # (a, b) outermost: per-pixel accumulation order matches the numpy path
    with nogil:
        for a in range(k):
            i_lo = 0 if a >= p else (p - a + s - 1) // s
            i_hi = (height - 1 - a + p) // s + 1
            if i_hi > ho:
                i_hi = ho
            for b in range(k):
                j_lo = 0 if b >= p else (p - b + s - 1) // s
                j_hi = (width - 1 - b + p) // s + 1
                if j_hi > wo:
                    j_hi = wo
                for i_n in range(n):
                    for i_c in range(c):
                        row = (i_c * k + a) * k + b
                        for i in range(i_lo, i_hi):
                            y = i * s + a - p
                            for j in range(j_lo, j_hi):
                                out[i_n, i_c, y, j * s + b - p] += cols[i_n, row, i * wo + j]
    return out_arr
