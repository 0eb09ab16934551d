"""Backend selection for the per-step implicit velocity solve.

The backward-Euler viscous update is the hot loop of a simulation.  Two
interchangeable implementations exist: a vectorized NumPy one (always
available) and a compiled one built from _step_core.pyx at install
time.  The compiled kernel is used when present unless the environment
variable STAR_SIM_FORCE_PY=1 demands the NumPy path.  Both produce the
same update to round-off; a test and benchmarks/bench_kernels.py hold
them to that.

Matrix convention: unknowns are the node velocities v_0..v_N.  Row 0
pins v_0 = 0.  Rows 1..N discretize inert*v - dt*L[v] = inert*v_star
where L is the viscous operator with the density-degenerate coefficient
(x**2 rho_bar / (r**2 r_x))**theta sampled at cell faces.  The flux
through the outer boundary face is zero (stress-free vacuum boundary);
the inertia there vanishes with rho_bar, so row N is the discrete
stress-free closure rather than an imposed boundary condition.
"""

import os

import numpy as np
from scipy.linalg import solve_banded

try:
    from . import _step_core
except ImportError:
    _step_core = None

FORCE_PURE = os.environ.get("STAR_SIM_FORCE_PY", "") == "1"
ACTIVE_BACKEND = "compiled" if (_step_core is not None and not FORCE_PURE) else "numpy"


def face_coefficients(r, x_face_sq, rho_face, dx, theta):
    """Per-face ingredients of the viscous operator for the current map r.

    Returns (coef, wf) where wf = f_face**theta is the degenerate
    viscosity weight at the cell faces and coef = wf/(rf_sq dr) is the
    flux coefficient multiplying differences of r**2 v.  The squared
    face radius is the volume-consistent (r_i**2 + r_i r_{i+1} +
    r_{i+1}**2)/3 = (r_{i+1}**3 - r_i**3)/(3 dr), not the midpoint
    square: with it a linear map r = c x yields the exact uniform
    strain (r**2 v)_x/(rf_sq r_x) = 3 c at every face including the
    innermost one, where a midpoint square is off by a factor 4/3.
    x_face_sq must be the same form evaluated on the grid, so the rest
    state r = x gives f_face = rho_face identically.
    """
    dr = np.diff(r)
    rf_sq = (r[:-1] ** 2 + r[:-1] * r[1:] + r[1:] ** 2) / 3.0
    f_face = x_face_sq * rho_face * dx / (rf_sq * dr)
    wf = f_face**theta
    coef = wf / (rf_sq * dr)
    return coef, wf


def weight_gradient_at_nodes(wf, dx):
    """d/dx of the face weight at nodes 1..N (index 0 unused, set to 0).

    Interior nodes difference the two adjacent faces; the outer node
    extrapolates one-sidedly from the last three interior faces.
    """
    n_nodes = wf.size + 1
    g = np.zeros(n_nodes)
    g[1:-1] = (wf[1:] - wf[:-1]) / dx
    g[-1] = (2.0 * wf[-1] - 3.0 * wf[-2] + wf[-3]) / dx
    return g


def build_viscous_diagonals(r, inert, x_face_sq, rho_face, dx, dt, theta,
                            nu, nu1):
    """Assemble the three bands of (inert - dt L[r]) in the node basis.

    Returns (lower, diag, upper) with lower[i] multiplying v_{i-1} and
    upper[i] multiplying v_{i+1}.  Row 0 is the identity pin for the
    origin; row N carries only the inner-face flux (the outer face is
    the vacuum boundary, where the weight degenerates to zero).
    """
    n = r.size - 1
    coef, wf = face_coefficients(r, x_face_sq, rho_face, dx, theta)
    wfx = weight_gradient_at_nodes(wf, dx)
    rsq = r**2

    s = dt * nu / dx
    diag = np.empty(n + 1)
    lower = np.zeros(n + 1)  # lower[i] multiplies v_{i-1}
    upper = np.zeros(n + 1)  # upper[i] multiplies v_{i+1}

    diag[1:-1] = (inert[1:-1] + s * rsq[1:-1] * (coef[1:] + coef[:-1])
                  + dt * 4.0 * nu1 * wfx[1:-1] / r[1:-1])
    diag[-1] = (inert[-1] + s * rsq[-1] * coef[-1]
                + dt * 4.0 * nu1 * wfx[-1] / r[-1])
    upper[1:-1] = -s * coef[1:] * rsq[2:]
    lower[1:] = -s * coef * rsq[:-1]
    diag[0], upper[0], lower[0] = 1.0, 0.0, 0.0
    return lower, diag, upper


def apply_tridiagonal(lower, diag, upper, v):
    """Matrix-vector product for the banded operator from the builder."""
    out = diag * v
    out[:-1] += upper[:-1] * v[1:]
    out[1:] += lower[1:] * v[:-1]
    return out


def step_velocity_numpy(r, v_star, inert, x_face_sq, rho_face, dx, dt,
                        theta, nu, nu1):
    """Backward-Euler viscous update, NumPy implementation.

    Solves (inert - dt L[r]) v = inert * v_star for the new node
    velocities with a banded direct solve.  Returns the velocity array;
    the caller validates the residual and the updated mesh.
    """
    lower, diag, upper = build_viscous_diagonals(
        r, inert, x_face_sq, rho_face, dx, dt, theta, nu, nu1)
    rhs = inert * v_star
    rhs[0] = 0.0

    n = r.size - 1
    ab = np.zeros((3, n + 1))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    v_new = solve_banded((1, 1), ab, rhs)
    v_new[0] = 0.0
    return v_new


def step_velocity(r, v_star, inert, x_face_sq, rho_face, dx, dt, theta, nu, nu1):
    if ACTIVE_BACKEND == "compiled":
        return _step_core.step_velocity(
            r, v_star, inert, x_face_sq, rho_face, dx, dt, theta, nu, nu1)
    return step_velocity_numpy(
        r, v_star, inert, x_face_sq, rho_face, dx, dt, theta, nu, nu1)
