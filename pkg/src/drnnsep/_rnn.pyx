# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled time recursions for a single rectified recurrent layer.

Row-major ``U`` is the column-major ``U.T`` seen by BLAS, so ``U @ h`` is a
``dgemv`` with ``trans='T'`` and ``U.T @ d`` is ``trans='N'``.
"""
import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()


def rnn_forward(const double[:, ::1] A, const double[:, ::1] U, const double[::1] h0):
    """h_t = max(0, A_t + U h_{t-1}); returns (H, P) with P the pre-activations."""
    cdef int T = A.shape[0]
    cdef int m = A.shape[1]
    cdef int one = 1
    cdef double alpha = 1.0, beta = 1.0
    cdef char trans = b'T'
    cdef int t, j
    H_arr = np.empty((T, m), dtype=np.float64)
    P_arr = np.empty((T, m), dtype=np.float64)
    cdef double[:, ::1] H = H_arr
    cdef double[:, ::1] P = P_arr
    cdef const double *hprev = &h0[0]
    for t in range(T):
        for j in range(m):
            P[t, j] = A[t, j]
        dgemv(&trans, &m, &m, &alpha, <double *> &U[0, 0], &m, <double *> hprev, &one,
              &beta, &P[t, 0], &one)
        for j in range(m):
            H[t, j] = P[t, j] if P[t, j] > 0.0 else 0.0
        hprev = &H[t, 0]
    return H_arr, P_arr


def rnn_backward(const double[:, ::1] dH, const double[:, ::1] P, const double[:, ::1] U):
    """Back-propagate through time; returns dL/dP for every step."""
    cdef int T = dH.shape[0]
    cdef int m = dH.shape[1]
    cdef int one = 1
    cdef double alpha = 1.0, beta = 0.0
    cdef char trans = b'N'
    cdef int t, j
    D_arr = np.empty((T, m), dtype=np.float64)
    cdef double[:, ::1] D = D_arr
    carry_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] carry = carry_arr
    for t in range(T - 1, -1, -1):
        for j in range(m):
            D[t, j] = (dH[t, j] + carry[j]) if P[t, j] > 0.0 else 0.0
        dgemv(&trans, &m, &m, &alpha, <double *> &U[0, 0], &m, &D[t, 0], &one,
              &beta, &carry[0], &one)
    return D_arr
