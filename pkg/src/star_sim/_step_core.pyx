# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of the NumPy implicit velocity update.

Assembles the same tridiagonal system as kernels.build_viscous_diagonals
and solves it with a Thomas sweep.  No pivoting: the system is strongly
diagonally dominant away from the vacuum boundary, and the caller
validates every solve against a residual tolerance, so a rare
ill-conditioned step is rejected there instead of silently corrupted.
"""

from libc.math cimport pow

import numpy as np

cimport numpy as cnp

cnp.import_array()


def step_velocity(double[::1] r, double[::1] v_star, double[::1] inert,
                  double[::1] x_face_sq, double[::1] rho_face,
                  double dx, double dt, double theta, double nu, double nu1):
    """Solve (inert - dt L[r]) v = inert * v_star, origin pinned to zero."""
    cdef Py_ssize_t n = r.shape[0] - 1   # faces 0..n-1, nodes 0..n
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n + 1, dtype=np.float64)
    cdef double[::1] v_new = out
    cdef double[::1] coef = np.empty(n, dtype=np.float64)
    cdef double[::1] wf = np.empty(n, dtype=np.float64)
    cdef double[::1] diag = np.empty(n + 1, dtype=np.float64)
    cdef double[::1] lower = np.empty(n + 1, dtype=np.float64)
    cdef double[::1] upper = np.empty(n + 1, dtype=np.float64)
    cdef double[::1] rhs = np.empty(n + 1, dtype=np.float64)
    cdef Py_ssize_t i
    cdef double rf_sq, dr, ff, s, wfx, m

    for i in range(n):
        # volume-consistent squared face radius, (r_{i+1}^3 - r_i^3)/(3 dr)
        rf_sq = (r[i] * r[i] + r[i] * r[i + 1] + r[i + 1] * r[i + 1]) / 3.0
        dr = r[i + 1] - r[i]
        ff = x_face_sq[i] * rho_face[i] * dx / (rf_sq * dr)
        wf[i] = pow(ff, theta)
        coef[i] = wf[i] / (rf_sq * dr)

    s = dt * nu / dx
    diag[0] = 1.0
    upper[0] = 0.0
    lower[0] = 0.0
    rhs[0] = 0.0
    for i in range(1, n):
        wfx = (wf[i] - wf[i - 1]) / dx
        diag[i] = (inert[i] + s * r[i] * r[i] * (coef[i] + coef[i - 1])
                   + dt * 4.0 * nu1 * wfx / r[i])
        upper[i] = -s * coef[i] * r[i + 1] * r[i + 1]
        lower[i] = -s * coef[i - 1] * r[i - 1] * r[i - 1]
        rhs[i] = inert[i] * v_star[i]
    wfx = (2.0 * wf[n - 1] - 3.0 * wf[n - 2] + wf[n - 3]) / dx
    diag[n] = (inert[n] + s * r[n] * r[n] * coef[n - 1]
               + dt * 4.0 * nu1 * wfx / r[n])
    lower[n] = -s * coef[n - 1] * r[n - 1] * r[n - 1]
    upper[n] = 0.0
    rhs[n] = inert[n] * v_star[n]

    for i in range(1, n + 1):
        m = lower[i] / diag[i - 1]
        diag[i] = diag[i] - m * upper[i - 1]
        rhs[i] = rhs[i] - m * rhs[i - 1]
    v_new[n] = rhs[n] / diag[n]
    for i in range(n - 1, -1, -1):
        v_new[i] = (rhs[i] - upper[i] * v_new[i + 1]) / diag[i]
    v_new[0] = 0.0
    return out
