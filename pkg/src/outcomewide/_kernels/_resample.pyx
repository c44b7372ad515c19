# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled resampling kernel; semantics match _fallback.linear_bootstrap_stats."""

from libc.math cimport sqrt

import numpy as np

cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef void _gemm_rowmajor(double* a, double* b, double* c, int m, int k, int n) noexcept nogil:
    # c (m x n, row-major) = a (m x k, row-major) @ b (k x n, row-major),
    # expressed as the column-major product c^T = b^T a^T.
    cdef char tn = b'N'
    cdef double one = 1.0
    cdef double zero = 0.0
    dgemm(&tn, &tn, &n, &m, &k, &one, b, &n, a, &k, &zero, c, &n)


def linear_bootstrap_stats(double[:, ::1] X, double[:, ::1] pinv, double cjj,
                           long dof, double[:, ::1] yhat, double[:, ::1] resid,
                           cnp.int64_t[:, ::1] idx, long jcol):
    """See _fallback.linear_bootstrap_stats for the argument contract."""
    cdef int n = X.shape[0]
    cdef int p = X.shape[1]
    cdef int k_out = yhat.shape[1]
    cdef int n_resamples = idx.shape[0]
    cdef int j = <int> jcol

    beta_arr = np.empty((n_resamples, k_out), dtype=np.float64)
    se_arr = np.empty((n_resamples, k_out), dtype=np.float64)
    ystar_arr = np.empty((n, k_out), dtype=np.float64)
    bstar_arr = np.empty((p, k_out), dtype=np.float64)
    fit_arr = np.empty((n, k_out), dtype=np.float64)
    rss_arr = np.empty(k_out, dtype=np.float64)

    cdef double[:, ::1] beta = beta_arr
    cdef double[:, ::1] se = se_arr
    cdef double[:, ::1] ystar = ystar_arr
    cdef double[:, ::1] bstar = bstar_arr
    cdef double[:, ::1] fit = fit_arr
    cdef double[::1] rss = rss_arr

    cdef double scale = cjj / dof
    cdef int b, i, k, r
    cdef double d

    with nogil:
        for b in range(n_resamples):
            for i in range(n):
                r = <int> idx[b, i]
                for k in range(k_out):
                    ystar[i, k] = yhat[i, k] + resid[r, k]
            _gemm_rowmajor(&pinv[0, 0], &ystar[0, 0], &bstar[0, 0], p, n, k_out)
            _gemm_rowmajor(&X[0, 0], &bstar[0, 0], &fit[0, 0], n, p, k_out)
            for k in range(k_out):
                rss[k] = 0.0
            for i in range(n):
                for k in range(k_out):
                    d = ystar[i, k] - fit[i, k]
                    rss[k] += d * d
            for k in range(k_out):
                beta[b, k] = bstar[j, k]
                se[b, k] = sqrt(scale * rss[k])
    return beta_arr, se_arr
