# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scoring kernels for the greedy builder.

Same signatures and semantics as :mod:`bayesrose._kernels_py`.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p

cnp.import_array()

cdef inline double _logaddexp(double x, double y) nogil:
    cdef double d
    if x == y:
        return x + 0.6931471805599453
    d = x - y
    if d > 0:
        return x + log1p(exp(-d))
    elif d <= 0:
        return y + log1p(exp(d))
    return d  # nan


def bb_merged_log_f(const cnp.int64_t[:, ::1] counts, const cnp.int64_t[::1] sizes,
                    Py_ssize_t slot, const cnp.int64_t[::1] partners,
                    const double[:, ::1] lg_alpha, const double[:, ::1] lg_beta,
                    const double[::1] lg_total, double offset):
    cdef Py_ssize_t m = partners.shape[0], d = counts.shape[1]
    cdef Py_ssize_t r, i, j, n, N
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] res = out
    cdef double acc
    with nogil:
        for r in range(m):
            j = partners[r]
            N = sizes[slot] + sizes[j]
            acc = offset - lg_total[N]
            for i in range(d):
                n = counts[slot, i] + counts[j, i]
                acc += lg_alpha[n, i] + lg_beta[N - n, i]
            res[r] = acc
    return out


def select_ops(const double[::1] log_f, double lp_a, double cp_a, Py_ssize_t k_a,
               const double[::1] lp_b, const double[::1] cp_b, const cnp.int64_t[::1] k_b,
               const double[::1] log_pi, const double[::1] log_1mpi, bint rose):
    cdef Py_ssize_t m = log_f.shape[0], r, k
    best_arr = np.empty(m, dtype=np.float64)
    op_arr = np.zeros(m, dtype=np.int8)
    cdef double[::1] best = best_arr
    cdef cnp.int8_t[::1] op = op_arr
    cdef double base, b, s, f
    with nogil:
        for r in range(m):
            f = log_f[r]
            base = lp_a + lp_b[r]
            b = _logaddexp(log_pi[2] + f, log_1mpi[2] + base) - base
            op[r] = 0
            if rose:
                if k_a > 0:
                    k = k_a + 1
                    s = _logaddexp(log_pi[k] + f, log_1mpi[k] + cp_a + lp_b[r]) - base
                    if s >= b:
                        b = s
                        op[r] = 1
                if k_b[r] > 0:
                    k = k_b[r] + 1
                    s = _logaddexp(log_pi[k] + f, log_1mpi[k] + lp_a + cp_b[r]) - base
                    if s >= b:
                        b = s
                        op[r] = 2
                    if k_a > 0:
                        k = k_a + k_b[r]
                        s = _logaddexp(log_pi[k] + f, log_1mpi[k] + cp_a + cp_b[r]) - base
                        if s >= b:
                            b = s
                            op[r] = 3
            best[r] = b
    return best_arr, op_arr
