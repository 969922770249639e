# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Serial C kernels for the 3x3 convolution forward and weight gradient.

Same contract as _conv_numpy: xpad (B, C, H+2, W+2) float64 C-contiguous,
weight (O, C, 3, 3), bias (O,).  The inner loops run over image rows through
raw pointers: the forward pass is a three-tap stencil per (channel, ky) pair
and the weight gradient keeps three independent accumulator chains, both of
which the C compiler turns into vector code.
"""

import numpy as np


def conv3x3(const double[:, :, :, ::1] xpad,
            const double[:, :, :, ::1] weight,
            const double[::1] bias):
    cdef Py_ssize_t nb = xpad.shape[0], nc = xpad.shape[1]
    cdef Py_ssize_t nh = xpad.shape[2] - 2, nw = xpad.shape[3] - 2
    cdef Py_ssize_t no = weight.shape[0]
    out_arr = np.empty((nb, no, nh, nw), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, o, c, y, x, ky
    cdef double w0, w1, w2, b_o
    cdef const double* xr
    cdef double* orow
    with nogil:
        for b in range(nb):
            for o in range(no):
                b_o = bias[o]
                for y in range(nh):
                    orow = &out[b, o, y, 0]
                    for x in range(nw):
                        orow[x] = b_o
                for c in range(nc):
                    for ky in range(3):
                        w0 = weight[o, c, ky, 0]
                        w1 = weight[o, c, ky, 1]
                        w2 = weight[o, c, ky, 2]
                        for y in range(nh):
                            xr = &xpad[b, c, y + ky, 0]
                            orow = &out[b, o, y, 0]
                            for x in range(nw):
                                orow[x] += w0 * xr[x] + w1 * xr[x + 1] + w2 * xr[x + 2]
    return out_arr


def conv3x3_wgrad(const double[:, :, :, ::1] xpad,
                  const double[:, :, :, ::1] dy):
    cdef Py_ssize_t nb = xpad.shape[0], nc = xpad.shape[1]
    cdef Py_ssize_t no = dy.shape[1], nh = dy.shape[2], nw = dy.shape[3]
    dweight_arr = np.zeros((no, nc, 3, 3), dtype=np.float64)
    dbias_arr = np.zeros(no, dtype=np.float64)
    cdef double[:, :, :, ::1] dweight = dweight_arr
    cdef double[::1] dbias = dbias_arr
    cdef Py_ssize_t b, o, c, y, x, ky
    cdef double a0, a1, a2, d
    cdef const double* xr
    cdef const double* dr
    with nogil:
        for o in range(no):
            a0 = 0.0
            for b in range(nb):
                for y in range(nh):
                    dr = &dy[b, o, y, 0]
                    for x in range(nw):
                        a0 += dr[x]
            dbias[o] = a0
            for c in range(nc):
                for ky in range(3):
                    a0 = 0.0
                    a1 = 0.0
                    a2 = 0.0
                    for b in range(nb):
                        for y in range(nh):
                            dr = &dy[b, o, y, 0]
                            xr = &xpad[b, c, y + ky, 0]
                            for x in range(nw):
                                d = dr[x]
                                a0 += d * xr[x]
                                a1 += d * xr[x + 1]
                                a2 += d * xr[x + 2]
                    dweight[o, c, ky, 0] = a0
                    dweight[o, c, ky, 1] = a1
                    dweight[o, c, ky, 2] = a2
    return dweight_arr, dbias_arr
