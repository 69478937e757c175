# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused row kernels over the last axis of C-contiguous float64 arrays.

Every function takes 2-D views (rows x cols) and writes into preallocated
outputs; shape handling lives in the Python wrapper.
"""
from libc.math cimport exp, sqrt, tanh, INFINITY

cdef double GELU_C = 0.7978845608028654  # sqrt(2/pi)
cdef double GELU_A = 0.044715


def softmax_fwd(const double[:, ::1] x, double[:, ::1] out):
    cdef Py_ssize_t r, c, rows = x.shape[0], cols = x.shape[1]
    cdef double m, s, v
    for r in range(rows):
        m = -INFINITY
        for c in range(cols):
            if x[r, c] > m:
                m = x[r, c]
        s = 0.0
        for c in range(cols):
            v = exp(x[r, c] - m)
            out[r, c] = v
            s += v
        for c in range(cols):
            out[r, c] = out[r, c] / s


def softmax_bwd(const double[:, ::1] y, const double[:, ::1] gy, double[:, ::1] gx):
    cdef Py_ssize_t r, c, rows = y.shape[0], cols = y.shape[1]
    cdef double dot
    for r in range(rows):
        dot = 0.0
        for c in range(cols):
            dot += gy[r, c] * y[r, c]
        for c in range(cols):
            gx[r, c] = y[r, c] * (gy[r, c] - dot)


def layer_norm_fwd(const double[:, ::1] x, const double[::1] gain, const double[::1] bias,
                   double eps, double[:, ::1] out, double[:, ::1] xhat, double[::1] rstd):
    cdef Py_ssize_t r, c, rows = x.shape[0], cols = x.shape[1]
    cdef double mean, var, d, inv
    for r in range(rows):
        mean = 0.0
        for c in range(cols):
            mean += x[r, c]
        mean /= cols
        var = 0.0
        for c in range(cols):
            d = x[r, c] - mean
            var += d * d
        var /= cols
        inv = 1.0 / sqrt(var + eps)
        rstd[r] = inv
        for c in range(cols):
            d = (x[r, c] - mean) * inv
            xhat[r, c] = d
            out[r, c] = d * gain[c] + bias[c]


def layer_norm_bwd(const double[:, ::1] gy, const double[:, ::1] xhat, const double[::1] rstd,
                   const double[::1] gain, double[:, ::1] gx, double[::1] ggain, double[::1] gbias):
    cdef Py_ssize_t r, c, rows = gy.shape[0], cols = gy.shape[1]
    cdef double m1, m2, g
    for c in range(cols):
        ggain[c] = 0.0
        gbias[c] = 0.0
    for r in range(rows):
        m1 = 0.0
        m2 = 0.0
        for c in range(cols):
            g = gy[r, c] * gain[c]
            m1 += g
            m2 += g * xhat[r, c]
            ggain[c] += gy[r, c] * xhat[r, c]
            gbias[c] += gy[r, c]
        m1 /= cols
        m2 /= cols
        for c in range(cols):
            gx[r, c] = rstd[r] * (gy[r, c] * gain[c] - m1 - xhat[r, c] * m2)


def gelu_fwd(const double[::1] x, double[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double v
    for i in range(n):
        v = x[i]
        out[i] = 0.5 * v * (1.0 + tanh(GELU_C * (v + GELU_A * v * v * v)))


def gelu_bwd(const double[::1] x, const double[::1] gy, double[::1] gx):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double v, t, u
    for i in range(n):
        v = x[i]
        u = GELU_C * (v + GELU_A * v * v * v)
        t = tanh(u)
        gx[i] = gy[i] * (0.5 * (1.0 + t)
                         + 0.5 * v * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * v * v))
