# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled fixed-step RK4 for the single-qubit Lindblad equation.

Same arithmetic as ``vzfold._rk4_py.rk4_lindblad``; see that module for the
equation and argument conventions.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline void _rhs(double complex a, double complex b, double complex c, double complex d,
                      double x, double y, double z, double g1, double gphi,
                      double complex* out) noexcept nogil:
    cdef double complex h01 = 0.5 * (x - 1j * y)
    cdef double complex h10 = 0.5 * (x + 1j * y)
    cdef double hz = 0.5 * z
    cdef double complex k00 = h01 * c - b * h10
    cdef double complex k01 = 2.0 * hz * b + h01 * (d - a)
    cdef double complex k10 = h10 * (a - d) - 2.0 * hz * c
    cdef double complex k11 = h10 * b - c * h01
    cdef double complex damp = g1 * d
    cdef double coh = 0.5 * g1 + 2.0 * gphi
    out[0] = -1j * k00 + damp
    out[1] = -1j * k01 - coh * b
    out[2] = -1j * k10 - coh * c
    out[3] = -1j * k11 - damp


def rk4_lindblad(rho0, hx, hy, double hz, double dt, double g1, double gphi, record=None):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] hxa = np.ascontiguousarray(hx, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] hya = np.ascontiguousarray(hy, dtype=np.float64)
    cdef Py_ssize_t n = hxa.shape[0]
    if hya.shape[0] != n or hxa.shape[1] != 3 or hya.shape[1] != 3:
        raise ValueError("hx and hy must both have shape (n, 3)")
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rec
    if record is None:
        rec = np.zeros(0, dtype=np.int64)
    else:
        rec = np.ascontiguousarray(record, dtype=np.int64)
    cdef Py_ssize_t nrec = rec.shape[0]
    snaps_arr = np.zeros((nrec, 2, 2), dtype=np.complex128)
    cdef double complex[:, :, ::1] snaps = snaps_arr
    r = np.asarray(rho0, dtype=np.complex128).ravel()
    cdef double complex a = r[0], b = r[1], c = r[2], d = r[3]
    cdef double complex k1[4]
    cdef double complex k2[4]
    cdef double complex k3[4]
    cdef double complex k4[4]
    cdef double half = 0.5 * dt
    cdef double sixth = dt / 6.0
    cdef Py_ssize_t i, ri = 0
    cdef double[:, ::1] X = hxa
    cdef double[:, ::1] Y = hya
    cdef long long[::1] R = rec
    with nogil:
        for i in range(n):
            while ri < nrec and R[ri] == i:
                snaps[ri, 0, 0] = a
                snaps[ri, 0, 1] = b
                snaps[ri, 1, 0] = c
                snaps[ri, 1, 1] = d
                ri += 1
            _rhs(a, b, c, d, X[i, 0], Y[i, 0], hz, g1, gphi, k1)
            _rhs(a + half * k1[0], b + half * k1[1], c + half * k1[2], d + half * k1[3],
                 X[i, 1], Y[i, 1], hz, g1, gphi, k2)
            _rhs(a + half * k2[0], b + half * k2[1], c + half * k2[2], d + half * k2[3],
                 X[i, 1], Y[i, 1], hz, g1, gphi, k3)
            _rhs(a + dt * k3[0], b + dt * k3[1], c + dt * k3[2], d + dt * k3[3],
                 X[i, 2], Y[i, 2], hz, g1, gphi, k4)
            a = a + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            b = b + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            c = c + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
            d = d + sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        while ri < nrec and R[ri] == n:
            snaps[ri, 0, 0] = a
            snaps[ri, 0, 1] = b
            snaps[ri, 1, 0] = c
            snaps[ri, 1, 1] = d
            ri += 1
    if ri != nrec:
        raise ValueError("record indices must be sorted and lie in [0, n]")
    out = np.empty((2, 2), dtype=np.complex128)
    out[0, 0] = a
    out[0, 1] = b
    out[1, 0] = c
    out[1, 1] = d
    return out, snaps_arr
