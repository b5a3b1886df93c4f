# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops for 1-d threshold economies.

Both kernels mirror :mod:`perfpower._kernels_py`. The displacement sums
may differ from numpy's pairwise reduction in the last bits; the zero-one
sums use the same sequential prefix and agree exactly.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def threshold_displacement(const double[::1] x_orig, const double[::1] x_current,
                           const double[::1] budget, double scale,
                           const double[::1] thetas):
    cdef Py_ssize_t n = x_orig.shape[0]
    cdef Py_ssize_t m = thetas.shape[0]
    cdef Py_ssize_t i, k
    cdef double theta, x0, xf, d, s, s2
    sums = np.zeros(m, dtype=np.float64)
    sumsq = np.zeros(m, dtype=np.float64)
    cdef double[::1] out = sums
    cdef double[::1] out2 = sumsq
    for k in range(m):
        theta = thetas[k]
        s = 0.0
        s2 = 0.0
        for i in range(n):
            x0 = x_orig[i]
            xf = x0
            if x0 < theta and scale * (theta - x0) <= budget[i]:
                xf = theta
            d = fabs(xf - x_current[i])
            s += d
            s2 += d * d
        out[k] = s
        out2[k] = s2
    return sums, sumsq


def zero_one_risk_sums(const double[::1] x_sorted, const double[::1] w_sorted,
                       double budget, double scale,
                       const double[::1] phis, const double[::1] thetas_sorted):
    cdef Py_ssize_t n = x_sorted.shape[0]
    cdef Py_ssize_t kp = phis.shape[0]
    cdef Py_ssize_t kt = thetas_sorted.shape[0]
    cdef Py_ssize_t a, b, j
    cdef double phi, theta, x0, xp, total

    prefix = np.zeros(n + 1, dtype=np.float64)
    cdef double[::1] pb = prefix
    for j in range(n):
        pb[j + 1] = pb[j] + w_sorted[j]
    total = pb[n]

    sums = np.empty((kp, kt), dtype=np.float64)
    cdef double[:, ::1] out = sums
    for a in range(kp):
        phi = phis[a]
        j = 0
        for b in range(kt):
            theta = thetas_sorted[b]
            while j < n:
                x0 = x_sorted[j]
                xp = x0
                if x0 < phi and scale * (phi - x0) <= budget:
                    xp = phi
                if xp >= theta:
                    break
                j += 1
            # rejected positive mass plus accepted negative mass
            out[a, b] = pb[j] + <double>(n - j) - (total - pb[j])
    return sums
