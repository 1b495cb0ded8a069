# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled combination kernels; same contract as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef inline double _act(double v, int code) nogil:
    cdef double c, r
    cdef int i
    if code < 0:
        return v if v > 0.0 else 0.0
    if v >= 1.0:
        return 1.0
    if v <= -1.0:
        return -1.0
    r = v
    c = v * v
    for i in range(code):
        r *= c
    return r


cdef inline double _act_grad(double v, int code) nogil:
    cdef double c, r
    cdef int i
    if code < 0:
        return 1.0 if v > 0.0 else 0.0
    if fabs(v) >= 1.0:
        return 0.0
    r = 2 * code + 1
    c = v * v
    for i in range(code):
        r *= c
    return r


def activate(pre, int code):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] flat = np.ascontiguousarray(pre, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty_like(flat)
    cdef Py_ssize_t i, n = flat.shape[0]
    with nogil:
        for i in range(n):
            out[i] = _act(flat[i], code)
    return out.reshape(np.shape(pre))


def activate_grad(pre, int code):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] flat = np.ascontiguousarray(pre, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty_like(flat)
    cdef Py_ssize_t i, n = flat.shape[0]
    with nogil:
        for i in range(n):
            out[i] = _act_grad(flat[i], code)
    return out.reshape(np.shape(pre))


def comb_act_forward(x, comb, M, int code):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] cv = np.ascontiguousarray(comb, dtype=np.int64)
    cdef const double[:, ::1] mv = np.ascontiguousarray(M, dtype=np.float64)
    cdef Py_ssize_t nb = xv.shape[0], nc = cv.shape[0], no = cv.shape[1]
    pre = np.empty((nb, nc), dtype=np.float64)
    F = np.empty((nb, nc), dtype=np.float64)
    cdef double[:, ::1] pv = pre
    cdef double[:, ::1] fv = F
    cdef Py_ssize_t b, c, j
    cdef double s
    with nogil:
        for b in range(nb):
            for c in range(nc):
                s = 0.0
                for j in range(no):
                    s = s + xv[b, cv[c, j]] * mv[c, j]
                pv[b, c] = s
                fv[b, c] = _act(s, code)
    return pre, F


def comb_act_backward(x, comb, pre, dF, int code):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] cv = np.ascontiguousarray(comb, dtype=np.int64)
    cdef const double[:, ::1] pv = np.ascontiguousarray(pre, dtype=np.float64)
    cdef const double[:, ::1] dv = np.ascontiguousarray(dF, dtype=np.float64)
    cdef Py_ssize_t nb = xv.shape[0], nc = cv.shape[0], no = cv.shape[1]
    dM = np.zeros((nc, no), dtype=np.float64)
    cdef double[:, ::1] gv = dM
    cdef Py_ssize_t b, c, j
    cdef double g
    with nogil:
        for c in range(nc):
            for b in range(nb):
                g = dv[b, c] * _act_grad(pv[b, c], code)
                if g != 0.0:
                    for j in range(no):
                        gv[c, j] += g * xv[b, cv[c, j]]
    return dM
