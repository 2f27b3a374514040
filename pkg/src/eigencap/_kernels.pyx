# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()


cdef inline void _rx(double complex[:, ::1] psi, Py_ssize_t row, int L, int q,
                     double c, double s) noexcept nogil:
    cdef Py_ssize_t K = psi.shape[1]
    cdef Py_ssize_t stride = 1 << (L - 1 - q)
    cdef Py_ssize_t base, j, i0, i1
    cdef double complex a0, a1
    cdef double complex ms = -1j * s
    base = 0
    while base < K:
        for j in range(stride):
            i0 = base + j
            i1 = i0 + stride
            a0 = psi[row, i0]
            a1 = psi[row, i1]
            psi[row, i0] = c * a0 + ms * a1
            psi[row, i1] = ms * a0 + c * a1
        base += 2 * stride


def circuit_states(double[::1] theta_x, double[::1] theta_z, double[::1] theta_i,
                   double complex[::1] zz_phase, int tau, us, init=None):
    cdef int L = theta_x.shape[0]
    cdef Py_ssize_t K = 1 << L
    cdef double[::1] u = np.ascontiguousarray(us, dtype=np.float64)
    cdef Py_ssize_t B = u.shape[0]
    cdef cnp.ndarray out
    if init is None:
        out = np.zeros((B, K), dtype=np.complex128)
        out[:, 0] = 1.0
    else:
        out = np.array(init, dtype=np.complex128, copy=True).reshape(B, K)
    cdef double complex[:, ::1] psi = out
    cdef double[::1] cx = np.cos(np.asarray(theta_x) / 4.0)
    cdef double[::1] sx = np.sin(np.asarray(theta_x) / 4.0)
    cdef double complex[::1] diag = np.empty(K, dtype=np.complex128)
    cdef Py_ssize_t n, k
    cdef int t, q
    cdef double phase
    for n in range(B):
        # combined Rz layer and coupling phase as one diagonal
        for k in range(K):
            phase = 0.0
            for q in range(L):
                if (k >> (L - 1 - q)) & 1:
                    phase += 0.5 * (theta_z[q] + theta_i[q] * u[n])
                else:
                    phase -= 0.5 * (theta_z[q] + theta_i[q] * u[n])
            diag[k] = (cos(phase) + 1j * sin(phase)) * zz_phase[k]
        with nogil:
            for t in range(tau):
                for q in range(L):
                    _rx(psi, n, L, q, cx[q], sx[q])
                for k in range(K):
                    psi[n, k] = psi[n, k] * diag[k]
                for q in range(L):
                    _rx(psi, n, L, q, cx[q], sx[q])
    return out


def circuit_probabilities(theta_x, theta_z, theta_i, zz_phase, int tau, us):
    psi = circuit_states(theta_x, theta_z, theta_i, zz_phase, tau, us)
    return psi.real ** 2 + psi.imag ** 2


def fwht(x):
    cdef cnp.ndarray arr = np.array(x, dtype=np.float64, copy=True, order="C")
    cdef Py_ssize_t K = arr.shape[arr.ndim - 1]
    cdef double[:, ::1] a = arr.reshape(-1, K)
    cdef Py_ssize_t R = a.shape[0]
    cdef Py_ssize_t r, h, base, j
    cdef double top, bot
    with nogil:
        for r in range(R):
            h = 1
            while h < K:
                base = 0
                while base < K:
                    for j in range(base, base + h):
                        top = a[r, j]
                        bot = a[r, j + h]
                        a[r, j] = top + bot
                        a[r, j + h] = top - bot
                    base += 2 * h
                h *= 2
    return arr
