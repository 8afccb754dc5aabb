# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: conv1d patch movement and fused GRU gates.

Mirrors kernels_py exactly; the two backends must agree to rounding error.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


cdef inline double _sig(double x) nogil:
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    cdef double e = exp(x)
    return e / (1.0 + e)


def im2col1d(cnp.ndarray[double, ndim=3] x, int k, int stride, int pad):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t Lout = (L + 2 * pad - k) // stride + 1
    cdef cnp.ndarray[double, ndim=3] out = np.zeros((B, C * k, Lout))
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x)
    cdef double[:, :, ::1] ov = out
    cdef Py_ssize_t b, c, j, o, src
    with nogil:
        for b in range(B):
            for c in range(C):
                for j in range(k):
                    for o in range(Lout):
                        src = o * stride + j - pad
                        if 0 <= src < L:
                            ov[b, c * k + j, o] = xv[b, c, src]
    return out


def col2im1d(cnp.ndarray[double, ndim=3] cols, int L, int k, int stride, int pad):
    cdef Py_ssize_t B = cols.shape[0], Ck = cols.shape[1], Lout = cols.shape[2]
    cdef Py_ssize_t C = Ck // k
    cdef cnp.ndarray[double, ndim=3] out = np.zeros((B, C, L))
    cdef double[:, :, ::1] cv = np.ascontiguousarray(cols)
    cdef double[:, :, ::1] ov = out
    cdef Py_ssize_t b, c, j, o, dst
    with nogil:
        for b in range(B):
            for c in range(C):
                for j in range(k):
                    for o in range(Lout):
                        dst = o * stride + j - pad
                        if 0 <= dst < L:
                            ov[b, c, dst] += cv[b, c * k + j, o]
    return out


def gru_gates_forward(cnp.ndarray[double, ndim=2] gx,
                      cnp.ndarray[double, ndim=2] gh,
                      cnp.ndarray[double, ndim=2] h_prev):
    cdef Py_ssize_t B = h_prev.shape[0], H = h_prev.shape[1]
    cdef cnp.ndarray[double, ndim=2] h = np.empty((B, H))
    cdef cnp.ndarray[double, ndim=2] r = np.empty((B, H))
    cdef cnp.ndarray[double, ndim=2] z = np.empty((B, H))
    cdef cnp.ndarray[double, ndim=2] n = np.empty((B, H))
    cdef double[:, ::1] gxv = np.ascontiguousarray(gx)
    cdef double[:, ::1] ghv = np.ascontiguousarray(gh)
    cdef double[:, ::1] hp = np.ascontiguousarray(h_prev)
    cdef double[:, ::1] hv = h, rv = r, zv = z, nv = n
    cdef Py_ssize_t b, i
    cdef double rr, zz, nn
    with nogil:
        for b in range(B):
            for i in range(H):
                rr = _sig(gxv[b, i] + ghv[b, i])
                zz = _sig(gxv[b, H + i] + ghv[b, H + i])
                nn = tanh(gxv[b, 2 * H + i] + rr * ghv[b, 2 * H + i])
                rv[b, i] = rr
                zv[b, i] = zz
                nv[b, i] = nn
                hv[b, i] = (1.0 - zz) * nn + zz * hp[b, i]
    return h, r, z, n


def gru_gates_backward(cnp.ndarray[double, ndim=2] dh,
                       cnp.ndarray[double, ndim=2] r,
                       cnp.ndarray[double, ndim=2] z,
                       cnp.ndarray[double, ndim=2] n,
                       cnp.ndarray[double, ndim=2] gh_n,
                       cnp.ndarray[double, ndim=2] h_prev):
    cdef Py_ssize_t B = h_prev.shape[0], H = h_prev.shape[1]
    cdef cnp.ndarray[double, ndim=2] dgx = np.empty((B, 3 * H))
    cdef cnp.ndarray[double, ndim=2] dgh = np.empty((B, 3 * H))
    cdef cnp.ndarray[double, ndim=2] dhp = np.empty((B, H))
    cdef double[:, ::1] dhv = np.ascontiguousarray(dh)
    cdef double[:, ::1] rv = np.ascontiguousarray(r)
    cdef double[:, ::1] zv = np.ascontiguousarray(z)
    cdef double[:, ::1] nv = np.ascontiguousarray(n)
    cdef double[:, ::1] gnv = np.ascontiguousarray(gh_n)
    cdef double[:, ::1] hpv = np.ascontiguousarray(h_prev)
    cdef double[:, ::1] dgxv = dgx, dghv = dgh, dhpv = dhp
    cdef Py_ssize_t b, i
    cdef double dz, dn, dr
    with nogil:
        for b in range(B):
            for i in range(H):
                dz = dhv[b, i] * (hpv[b, i] - nv[b, i]) * zv[b, i] * (1.0 - zv[b, i])
                dn = dhv[b, i] * (1.0 - zv[b, i]) * (1.0 - nv[b, i] * nv[b, i])
                dr = dn * gnv[b, i] * rv[b, i] * (1.0 - rv[b, i])
                dgxv[b, i] = dr
                dgxv[b, H + i] = dz
                dgxv[b, 2 * H + i] = dn
                dghv[b, i] = dr
                dghv[b, H + i] = dz
                dghv[b, 2 * H + i] = dn * rv[b, i]
                dhpv[b, i] = dhv[b, i] * zv[b, i]
    return dgx, dgh, dhp
