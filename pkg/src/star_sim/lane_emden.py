"""Polytropic hydrostatic equilibria with a vacuum boundary.

The dimensionless structure equation

    w'' + (2/xi) w' + w**n = 0,   w(0) = 1,  w'(0) = 0,

is integrated once per polytropic index; rescaling then produces a star
of prescribed total mass on a uniform radial grid.  With the pressure
and gravitational constants set to one, the enclosed-mass potential
factor phi(x) = x**(-3) * integral_0^x 4 pi rho s**2 ds satisfies
hydrostatic balance in the form d(rho**(gamma-1))/dx = -((gamma-1)/gamma) x phi,
which this module exposes analytically.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.optimize import bisect

from .errors import ValidationError
from .numerics import node_gradient, node_second_derivative
from .params import GAMMA_MAX, GAMMA_MIN

# Below this radius the ODE is started from its Taylor expansion; the
# 2/xi term is otherwise stiffly singular for the integrator.
SERIES_MATCH_RADIUS = 1e-3
# The integrator runs slightly past the sign change (with the nonlinear
# term clamped at zero) so the zero crossing can be bracketed.
OVERSHOOT_DEPTH = 0.05


def _series_w(n, xi):
    """Taylor expansion of w about the center, through sixth order."""
    xi2 = np.asarray(xi, dtype=float) ** 2
    return 1.0 - xi2 / 6.0 + n * xi2**2 / 120.0 - n * (8.0 * n - 5.0) * xi2**3 / 15120.0


def _series_dw(n, xi):
    """Derivative of the center expansion."""
    xi = np.asarray(xi, dtype=float)
    xi2 = xi**2
    return xi * (-1.0 / 3.0 + n * xi2 / 30.0 - n * (8.0 * n - 5.0) * xi2**2 / 2520.0)


class EmdenTrajectory:
    """Dense solution of the structure ODE for one polytropic index.

    Wraps the integrator output together with the series used near the
    center, so ``w`` and ``dw`` can be evaluated anywhere on
    [0, reached_radius].  ``first_crossing`` holds the approximate first
    zero of w, or None if w stayed positive over the whole run.
    """

    def __init__(self, n, ivp_solution, reached_radius, first_crossing):
        self.n = n
        self._sol = ivp_solution.sol
        self.reached_radius = reached_radius
        self.first_crossing = first_crossing

    def w(self, xi):
        xi = np.asarray(xi, dtype=float)
        out = np.where(
            xi < SERIES_MATCH_RADIUS, _series_w(self.n, xi), self._sol(xi)[0])
        return out if out.ndim else float(out)

    def dw(self, xi):
        xi = np.asarray(xi, dtype=float)
        out = np.where(
            xi < SERIES_MATCH_RADIUS, _series_dw(self.n, xi), self._sol(xi)[1])
        return out if out.ndim else float(out)


def emden_trajectory(n, *, xi_max=100.0, ode_rtol=1e-12, ode_atol=1e-14):
    """Integrate the structure ODE out to xi_max or just past its first zero.

    Notes
    -----
    The nonlinear term is clamped to zero where w < 0 so the right-hand
    side stays real for fractional n while the trajectory overshoots the
    crossing; everything at w >= 0 is unaffected.
    """
    if n < 0:
        raise ValidationError(f"polytropic index must be nonnegative, got {n}")

    def rhs(xi, y):
        w, dw = y
        return [dw, -2.0 * dw / xi - max(w, 0.0) ** n]

    def crossing(xi, y):
        return y[0]

    crossing.direction = -1.0

    def deep_enough(xi, y):
        return y[0] + OVERSHOOT_DEPTH

    deep_enough.terminal = True
    deep_enough.direction = -1.0

    x0 = SERIES_MATCH_RADIUS
    y0 = [float(_series_w(n, x0)), float(_series_dw(n, x0))]
    sol = solve_ivp(
        rhs, (x0, xi_max), y0, method="RK45", dense_output=True,
        events=[crossing, deep_enough], rtol=ode_rtol, atol=ode_atol)
    if not sol.success:
        raise ValidationError(f"structure ODE integration failed: {sol.message}")

    crossings = sol.t_events[0]
    first = float(crossings[0]) if crossings.size else None
    return EmdenTrajectory(n, sol, float(sol.t[-1]), first)


@dataclass(frozen=True, eq=False)
class DimensionlessSolution:
    """Structure function w on a uniform grid over its full support.

    Attributes
    ----------
    n : float
        Polytropic index.
    xi : ndarray
        Uniform grid from 0 to the first zero ``xi1``.
    w, dw : ndarray
        Structure function and its derivative at the grid nodes; ``w``
        is clamped to exactly zero at the last node.
    xi1 : float
        First zero of w (the dimensionless stellar radius).
    dw_at_xi1 : float
        Slope of w at the boundary, strictly negative.
    """

    n: float
    xi: np.ndarray
    w: np.ndarray
    dw: np.ndarray
    xi1: float
    dw_at_xi1: float

    @property
    def mass_integral(self):
        """The quantity -xi1**2 w'(xi1) = integral of xi**2 w**n over the support."""
        return -self.xi1**2 * self.dw_at_xi1

    def residual(self):
        """Finite-difference residual of the structure ODE at interior nodes."""
        dx = self.xi[1] - self.xi[0]
        lap = node_second_derivative(self.w, dx)
        grad = node_gradient(self.w, dx)
        r = lap + 2.0 * grad / np.where(self.xi > 0, self.xi, 1.0) + self.w**self.n
        return r[1:-1]


def solve_dimensionless(n, *, root_tol=1e-12, ode_rtol=1e-12, grid_size=4096):
    """Solve the dimensionless structure problem for index ``n``.

    The first zero of w is bracketed by the integrator's crossing event
    and then polished by bisection on the dense output to ``root_tol``.
    Raises a validation error when w has no zero on the integration
    range, which happens for n >= 5.
    """
    traj = emden_trajectory(n, ode_rtol=ode_rtol)
    if traj.first_crossing is None:
        raise ValidationError(
            "no compact support detected for polytropic index "
            f"n={n}: w({traj.reached_radius:g})="
            f"{traj.w(traj.reached_radius):.6g} > 0 at the end of integration")

    guess = traj.first_crossing
    lo = guess - 1e-6
    while traj.w(lo) <= 0.0:  # should not trigger; guards a coarse event root
        lo -= 1e-6
    hi = min(guess + 1e-6, traj.reached_radius)
    xi1 = bisect(lambda s: traj.w(s), lo, hi, xtol=root_tol)
    dw1 = traj.dw(xi1)

    xi_grid = np.linspace(0.0, xi1, grid_size + 1)
    w = np.empty_like(xi_grid)
    dw = np.empty_like(xi_grid)
    w[0], dw[0] = 1.0, 0.0
    w[1:] = traj.w(xi_grid[1:])
    dw[1:] = traj.dw(xi_grid[1:])
    np.maximum(w, 0.0, out=w)
    w[-1] = 0.0
    dw[-1] = dw1
    return DimensionlessSolution(
        n=float(n), xi=xi_grid, w=w, dw=dw, xi1=float(xi1), dw_at_xi1=float(dw1))


@dataclass(frozen=True, eq=False)
class LaneEmdenProfile:
    """A mass-scaled equilibrium star sampled on a uniform radial grid.

    ``rho_bar`` and ``phi`` hold the density and the enclosed-mass
    potential factor at the nodes ``x``; ``rho_pow_gm1`` caches
    rho_bar**(gamma-1), which is proportional to w and appears in all
    degenerate-weight integrals.  ``c_pv`` is the measured constant of
    the physical-vacuum equivalence rho_bar**(gamma-1) ~ (radius - x).
    ``x_face`` and ``rho_face`` sample the cell midpoints of the grid,
    where the solver evaluates its degenerate flux coefficients, and
    ``x_face_sq`` carries the volume-consistent squared face positions
    (x_i**2 + x_i x_{i+1} + x_{i+1}**2)/3, the form that makes a linear
    map r = c x produce the exact uniform strain in the face fluxes.
    """

    gamma: float
    total_mass: float
    radius: float
    central_density: float
    polytropic_index: float
    length_scale: float
    x: np.ndarray
    rho_bar: np.ndarray
    phi: np.ndarray
    rho_pow_gm1: np.ndarray
    c_pv: float
    rho_face: np.ndarray = field(repr=False, compare=False, default=None)
    _rho_interp: PchipInterpolator = field(repr=False, compare=False, default=None)
    _phi_interp: PchipInterpolator = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_rho_interp", PchipInterpolator(self.x, self.rho_bar))
        object.__setattr__(self, "_phi_interp", PchipInterpolator(self.x, self.phi))
        a, b = self.x[:-1], self.x[1:]
        object.__setattr__(self, "x_face", 0.5 * (a + b))
        object.__setattr__(self, "x_face_sq", (a**2 + a * b + b**2) / 3.0)
        if self.rho_face is None:
            object.__setattr__(
                self, "rho_face", np.asarray(self._rho_interp(self.x_face)))

    @property
    def n_cells(self):
        return self.x.size - 1

    @property
    def dx(self):
        return self.x[1] - self.x[0]

    def rho_at(self, x):
        return self._rho_interp(x)

    def phi_at(self, x):
        return self._phi_interp(x)

    def quadrature_mass(self):
        """Total mass recomputed by trapezoidal quadrature of the node density."""
        return 4.0 * math.pi * np.trapezoid(self.rho_bar * self.x**2, self.x)


def scale_to_mass(dimensionless, *, gamma, total_mass, n_nodes=1024):
    """Scale a dimensionless solution to a star of the given total mass.

    The central density follows from inverting the mass relation
    M = 4 pi a**3 rho_c m1 with a = sqrt((n+1)/(4 pi)) rho_c**((1-n)/(2n)),
    which is monotone in rho_c for n < 3, i.e. throughout gamma > 4/3.
    """
    if not GAMMA_MIN < gamma < GAMMA_MAX:
        raise ValidationError(
            f"gamma must satisfy 4/3 < gamma < 2, got {gamma}")
    if not total_mass > 0.0:
        raise ValidationError(f"total mass must be positive, got {total_mass}")
    if n_nodes < 16:
        raise ValidationError(f"n_nodes must be at least 16, got {n_nodes}")
    n = 1.0 / (gamma - 1.0)
    if abs(dimensionless.n - n) > 1e-12 * max(1.0, n):
        raise ValidationError(
            f"dimensionless solution has index n={dimensionless.n}, but "
            f"gamma={gamma} requires n={n}")

    m1 = dimensionless.mass_integral
    len_coef = math.sqrt((n + 1.0) / (4.0 * math.pi))
    rho_c = (total_mass / (4.0 * math.pi * len_coef**3 * m1)) ** (2.0 * n / (3.0 - n))
    a = len_coef * rho_c ** ((1.0 - n) / (2.0 * n))
    radius = a * dimensionless.xi1

    xi = np.linspace(0.0, dimensionless.xi1, n_nodes + 1)
    stride, rem = divmod(dimensionless.xi.size - 1, n_nodes)
    w_face = None
    if rem == 0:
        # The requested nodes are an exact subsample of the stored grid.
        w = dimensionless.w[::stride].copy()
        dw = dimensionless.dw[::stride].copy()
        half, odd = divmod(stride, 2)
        if not odd:
            # Cell midpoints are fine-grid nodes too; sample them exactly
            # rather than interpolating, so the rest-state face fluxes
            # carry no interpolation noise.
            w_face = dimensionless.w[half::stride][:n_nodes].copy()
    else:
        w = np.maximum(PchipInterpolator(dimensionless.xi, dimensionless.w)(xi), 0.0)
        dw = PchipInterpolator(dimensionless.xi, dimensionless.dw)(xi)
        w[0], w[-1] = 1.0, 0.0

    x = a * xi
    x[-1] = radius
    rho = rho_c * w**n
    four_pi_rho_c = 4.0 * math.pi * rho_c
    phi = np.empty_like(x)
    phi[0] = four_pi_rho_c / 3.0
    phi[1:] = four_pi_rho_c * (-dw[1:]) / xi[1:]
    rho_gm1 = rho_c ** (gamma - 1.0) * w

    ratios = rho_gm1[:-1] / (radius - x[:-1])
    c_pv = float(max(ratios.max(), 1.0 / ratios.min()))

    rho_face = rho_c * w_face**n if w_face is not None else None
    return LaneEmdenProfile(
        gamma=float(gamma), total_mass=float(total_mass), radius=float(radius),
        central_density=float(rho_c), polytropic_index=float(n),
        length_scale=float(a), x=x, rho_bar=rho, phi=phi,
        rho_pow_gm1=rho_gm1, c_pv=c_pv, rho_face=rho_face)


def eval_profile(profile, x):
    """Evaluate (rho_bar, phi, d(rho_bar**(gamma-1))/dx) at points in [0, radius].

    Density and potential factor come from monotone cubic interpolation
    of the stored nodes; the degenerate-weight derivative uses the exact
    hydrostatic identity instead of differencing.
    """
    pts = np.asarray(x, dtype=float)
    if np.any(pts < 0.0) or np.any(pts > profile.radius):
        raise ValidationError(
            f"evaluation points must lie in [0, {profile.radius:.6g}]")
    rho = profile.rho_at(pts)
    phi = profile.phi_at(pts)
    scale = (profile.gamma - 1.0) / profile.gamma
    return rho, phi, -scale * pts * phi


def build_profile(*, gamma, total_mass, n_nodes=1024, root_tol=1e-12,
                  ode_rtol=1e-12):
    """Convenience wrapper: dimensionless solve plus mass scaling."""
    dimensionless = solve_dimensionless(
        1.0 / (gamma - 1.0), root_tol=root_tol, ode_rtol=ode_rtol)
    return scale_to_mass(
        dimensionless, gamma=gamma, total_mass=total_mass, n_nodes=n_nodes)


def potential_factor_from_density(x, rho):
    """Quadrature route to phi for an arbitrary node density.

    Treats rho as piecewise linear between nodes and integrates
    rho(s) s**2 exactly on each cell, so constant densities reproduce
    phi = (4 pi / 3) rho to rounding.  Serves as an independent check on
    the closed-form potential factor of the scaled profiles.
    """
    cum = cumulative_shell_integral(x, rho)
    phi = np.empty_like(cum)
    phi[0] = 4.0 * math.pi * rho[0] / 3.0
    phi[1:] = 4.0 * math.pi * cum[1:] / x[1:] ** 3
    return phi


def cumulative_shell_integral(x, rho):
    """Running integral of rho(s) s**2 ds for piecewise-linear rho.

    Exact per cell for the linear interpolant, hence third-order
    accurate overall and exactly mass-preserving under the linear
    rescalings used by the reference-map tests.
    """
    x = np.asarray(x, dtype=float)
    rho = np.asarray(rho, dtype=float)
    a, b = x[:-1], x[1:]
    h = b - a
    cube = (b**3 - a**3) / 3.0
    quart = (b**4 - a**4) / 4.0
    with np.errstate(invalid="ignore", divide="ignore"):
        cell = (rho[:-1] * (b * cube - quart) + rho[1:] * (quart - a * cube)) / h
    cell[h == 0.0] = 0.0
    out = np.zeros_like(x)
    np.cumsum(cell, out=out[1:])
    return out
