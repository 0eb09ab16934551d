"""Time integration of the Lagrangian free-boundary system.

The momentum balance evolved here is

    rho_bar (x/r)**2 v_t + [(x**2 rho_bar / (r**2 r_x))**gamma]_x
        + (x**5/r**4) phi rho_bar = V[v],

with the degenerate viscous operator

    V[v] = nu [w (r**2 v)_x / (r**2 r_x)]_x - 4 nu1 w_x (v/r),
    w = (x**2 rho_bar / (r**2 r_x))**theta.

Each step splits the update: an explicit pressure/gravity kick written
so every density division cancels analytically (the discrete
equilibrium r = x is then an exact fixed point), a backward-Euler solve
of the viscous operator through a tridiagonal system, and the flow-map
advance r += dt v.  Steps that invert the mesh are rejected and retried
with half the time step.
"""

from dataclasses import dataclass, field

import numpy as np

from . import diagnostics, kernels
from .errors import MeshInversionError, NumericalError, ValidationError
from .numerics import face_gradient_at_nodes, node_gradient
from .state import SimState, geometry

MAX_HALVINGS = 20


@dataclass(frozen=True)
class SolverConfig:
    """Grid resolution and time-stepping knobs."""

    n: int = 512
    cfl: float = 0.5
    dt_max: float = 0.05
    t_end: float = 100.0
    viscous_solve_tol: float = 1e-10
    output_stride: int = 20

    def __post_init__(self):
        if not (isinstance(self.n, int) and self.n >= 16):
            raise ValidationError(f"n must be an integer >= 16, got {self.n}")
        if not 0.0 < self.cfl <= 1.0:
            raise ValidationError(f"cfl must satisfy 0 < cfl <= 1, got {self.cfl}")
        if not self.dt_max > 0.0:
            raise ValidationError(f"dt_max must be positive, got {self.dt_max}")
        if self.t_end < 0.0:
            raise ValidationError(f"t_end must be nonnegative, got {self.t_end}")
        if not self.viscous_solve_tol > 0.0:
            raise ValidationError(
                f"viscous_solve_tol must be positive, got {self.viscous_solve_tol}")
        if not (isinstance(self.output_stride, int) and self.output_stride >= 1):
            raise ValidationError(
                f"output_stride must be an integer >= 1, got {self.output_stride}")


@dataclass(frozen=True, eq=False)
class ResidualBreakdown:
    """Term-by-term decomposition of the momentum balance at the nodes.

    residual = inertia_term + pressure_term + gravity_term - viscous_term,
    which vanishes (to truncation error) when the supplied v_t solves
    the momentum equation at this state.
    """

    pressure_term: np.ndarray
    gravity_term: np.ndarray
    viscous_term: np.ndarray
    inertia_term: np.ndarray

    @property
    def residual(self):
        return (self.inertia_term + self.pressure_term + self.gravity_term
                - self.viscous_term)


def acceleration(state, profile, params):
    """Pressure/gravity acceleration with every density division cancelled.

    Writing the compression as G = x**2/(r**2 r_x), the force per unit
    inertia is

        (r/x)**2 [ x phi (G**gamma - (x/r)**4) - rho_bar**(gamma-1) (G**gamma)_x ],

    which is exactly zero on the discrete equilibrium map r = x (all
    stencils reproduce r_x = 1 there) and involves only nonnegative
    powers of the density.  The origin entry is pinned to zero with the
    velocity.
    """
    rx, rox, compression = geometry(state, profile)
    dx = profile.dx
    gg = compression**params.gamma
    dgg = node_gradient(gg, dx)
    xphi = profile.x * profile.phi
    accel = rox**2 * (xphi * (gg - rox**-4.0) - profile.rho_pow_gm1 * dgg)
    accel[0] = 0.0
    return accel


def force_field(state, profile, params):
    """Net pressure-plus-gravity force density in conservative flux form.

    -[(x**2 rho_bar/(r**2 r_x))**gamma]_x - (x**5/r**4) phi rho_bar with
    the pressure gradient differenced from cell-face values of the
    Lagrangian density.  Vanishes at the equilibrium map to O(dx**2);
    the acceleration used inside step() is the equivalent well-balanced
    form, so this field is the honest truncation-error measure.
    """
    rx, rox, _ = geometry(state, profile)
    dx = profile.dx
    _, wf_gamma = kernels.face_coefficients(
        state.r, profile.x_face_sq, profile.rho_face, dx, params.gamma)
    pressure_gradient = face_gradient_at_nodes(wf_gamma, dx)
    gravity = profile.x * profile.phi * profile.rho_bar * rox**-4.0
    return -pressure_gradient - gravity


def viscous_operator(state, profile, params, v_arg):
    """Apply the degenerate viscous operator to a velocity field.

    Linear in v_arg for the frozen flow map: the flux part differences
    w (r**2 v)_x / (r**2 dr) across faces and the stretch part
    subtracts 4 nu1 w_x v/r.  No boundary condition enters at the outer
    node: the outward flux is zero because the face weight degenerates
    with the density.  The origin entry, where the operator is not
    evaluated (v(0) is pinned), is filled by quadratic extrapolation.
    """
    geometry(state, profile)  # validates the mesh
    r, dx = state.r, profile.dx
    coef, wf = kernels.face_coefficients(
        r, profile.x_face_sq, profile.rho_face, dx, params.theta)
    wfx = kernels.weight_gradient_at_nodes(wf, dx)
    u = r**2 * v_arg

    flux = np.empty_like(u)
    flux[1:-1] = (coef[1:] * (u[2:] - u[1:-1]) - coef[:-1] * (u[1:-1] - u[:-2])) / dx
    flux[-1] = -coef[-1] * (u[-1] - u[-2]) / dx

    out = np.empty_like(u)
    out[1:] = params.nu * flux[1:] - 4.0 * params.nu1 * wfx[1:] * v_arg[1:] / r[1:]
    out[0] = 3.0 * out[1] - 3.0 * out[2] + out[3]
    return out


def velocity_time_derivative(state, profile, params):
    """v_t from the momentum equation at the current state.

    All density divisions are performed symbolically: the pressure and
    gravity parts reduce to the well-balanced acceleration, and the
    viscous part is expanded with d(rho_bar)/dx eliminated through the
    hydrostatic identity, leaving explicit powers rho_bar**(theta-gamma)
    and rho_bar**(theta-1).  Those powers blow up only at the vacuum
    node, whose value is filled by one-sided quadratic extrapolation;
    the origin is pinned to zero.
    """
    rx, rox, compression = geometry(state, profile)
    x, dx = profile.x, profile.dx
    gamma, theta, nu, nu1 = params.gamma, params.theta, params.nu, params.nu1
    xphi = x * profile.phi

    accel = acceleration(state, profile, params)

    vx = node_gradient(state.v, dx)
    v_over_r = np.empty_like(state.v)
    v_over_r[0] = vx[0] / rx[0]
    v_over_r[1:] = state.v[1:] / state.r[1:]
    strain = 2.0 * v_over_r + vx / rx

    g_theta = compression**theta
    rho_in = profile.rho_bar[:-1]
    visc = np.empty_like(state.v)
    visc[:-1] = (
        (theta / gamma) * xphi[:-1] * rho_in ** (theta - gamma) * g_theta[:-1]
        * (4.0 * nu1 * v_over_r[:-1] - nu * strain[:-1])
        + rho_in ** (theta - 1.0)
        * (nu * node_gradient(g_theta * strain, dx)[:-1]
           - 4.0 * nu1 * node_gradient(g_theta, dx)[:-1] * v_over_r[:-1]))
    visc[-1] = 0.0

    v_t = accel + rox**2 * visc
    v_t[0] = 0.0
    v_t[-1] = 3.0 * v_t[-2] - 3.0 * v_t[-3] + v_t[-4]
    return v_t


def residual_breakdown(state, v_t_field, profile, params):
    """Evaluate each momentum-balance term at the nodes for a given v_t."""
    rx, rox, _ = geometry(state, profile)
    dx = profile.dx
    _, wf_gamma = kernels.face_coefficients(
        state.r, profile.x_face_sq, profile.rho_face, dx, params.gamma)
    pressure = face_gradient_at_nodes(wf_gamma, dx)
    gravity = profile.x * profile.phi * profile.rho_bar * rox**-4.0
    viscous = viscous_operator(state, profile, params, state.v)
    inertia = profile.rho_bar * rox**-2.0 * v_t_field
    return ResidualBreakdown(
        pressure_term=pressure, gravity_term=gravity,
        viscous_term=viscous, inertia_term=inertia)


def two_form_discrepancy(state, profile, params, dt):
    """Relative L2 gap between the two algebraic forms of the viscous term.

    The direct form applies the operator to v.  The rewritten form
    differences the weighted flux potential in time,

        -(nu/theta) (r/x)**(-c) d/dt { (r/x)**c w_x },

    with c = 4 nu1 theta / nu, evaluated with a forward Euler d/dt over
    the pair (r, r + dt v) and the same face-sampled weight w the direct
    operator uses.  The face density obeys the exact discrete continuity
    law d(f_face)/dt = -f_face A_face along the frozen-velocity flow, so
    the two routes coincide as dt -> 0 and the measured gap is the
    time-differencing error.  Interior nodes only: the vacuum node's
    one-sided weight gradient lies outside the identity.
    """
    rx, rox, _ = geometry(state, profile)
    dx = profile.dx
    c = 4.0 * params.nu1 * params.theta / params.nu

    def flux_potential(r_map):
        trial = SimState(t=state.t, r=r_map, v=state.v)
        _, rox_t, _ = geometry(trial, profile)
        _, wf = kernels.face_coefficients(
            r_map, profile.x_face_sq, profile.rho_face, dx, params.theta)
        return rox_t**c * kernels.weight_gradient_at_nodes(wf, dx)

    direct = viscous_operator(state, profile, params, state.v)
    ddt = (flux_potential(state.r + dt * state.v) - flux_potential(state.r)) / dt
    rewritten = -(params.nu / params.theta) * rox**-c * ddt

    gap = direct[1:-1] - rewritten[1:-1]
    scale = np.linalg.norm(direct[1:-1])
    return float(np.linalg.norm(gap) / scale) if scale > 0 else 0.0


def cfl_dt(state, profile, params, config):
    """Acoustic time-step bound; the implicit viscosity imposes none.

    dt = cfl * min over cells of dr / c_s with c_s = sqrt(gamma
    f**(gamma-1)) from the face Lagrangian density, capped by dt_max.
    Vacuum-adjacent cells never bind: their sound speed degenerates.
    """
    dr = np.diff(state.r)
    if np.any(dr <= 0.0):
        raise MeshInversionError("mesh inversion: nonpositive cell size")
    _, f_face = kernels.face_coefficients(
        state.r, profile.x_face_sq, profile.rho_face, profile.dx, 1.0)
    sound = np.sqrt(params.gamma * f_face ** (params.gamma - 1.0))
    return float(min(config.dt_max, config.cfl * np.min(dr / sound)))


def _inertia(rox, profile):
    return profile.rho_bar * rox**-2.0


def _advance(state, profile, params, config, dt):
    """One split step at fixed dt.  Raises MeshInversionError on failure."""
    rx, rox, _ = geometry(state, profile)
    dx = profile.dx
    inert = _inertia(rox, profile)

    v_star = state.v + dt * acceleration(state, profile, params)
    v_star[0] = 0.0

    v_new = kernels.step_velocity(
        state.r, v_star, inert, profile.x_face_sq, profile.rho_face,
        dx, dt, params.theta, params.nu, params.nu1)
    if not np.all(np.isfinite(v_new)):
        raise NumericalError("viscous solve produced non-finite velocities")
    _check_viscous_residual(state.r, v_star, v_new, inert, profile, params,
                            dx, dt, config.viscous_solve_tol)

    r_new = state.r + dt * v_new
    r_new[0] = 0.0
    if np.any(np.diff(r_new) <= 0.0):
        raise MeshInversionError("mesh inversion after step")
    return SimState(t=state.t + dt, r=r_new, v=v_new)


def _check_viscous_residual(r, v_star, v_new, inert, profile, params, dx, dt,
                            tol):
    """Verify the banded solve with a backward-error bound.

    The bands are reassembled by the NumPy builder whatever backend
    produced v_new, so a compiled kernel is held to the same residual
    ||A v - rhs||_inf <= tol (||A||_inf ||v||_inf + ||rhs||_inf).
    """
    lower, diag, upper = kernels.build_viscous_diagonals(
        r, inert, profile.x_face_sq, profile.rho_face, dx, dt,
        params.theta, params.nu, params.nu1)
    rhs = inert * v_star
    rhs[0] = 0.0
    resid = kernels.apply_tridiagonal(lower, diag, upper, v_new) - rhs
    norm_a = np.max(np.abs(lower) + np.abs(diag) + np.abs(upper))
    scale = norm_a * np.max(np.abs(v_new)) + np.max(np.abs(rhs))
    worst = np.max(np.abs(resid))
    if scale > 0.0 and worst > tol * scale:
        raise NumericalError(
            f"viscous solve residual {worst:.3e} exceeds "
            f"{tol:.1e} * {scale:.3e}")


def step(state, profile, params, config, *, dt=None):
    """Advance one step, halving dt on mesh inversion (at most 20 times)."""
    dt_try = cfl_dt(state, profile, params, config) if dt is None else float(dt)
    for _ in range(MAX_HALVINGS + 1):
        try:
            return _advance(state, profile, params, config, dt_try)
        except MeshInversionError:
            dt_try *= 0.5
    raise NumericalError(
        f"time step collapsed after {MAX_HALVINGS} halvings at t={state.t:.6g}")


@dataclass(frozen=True, eq=False)
class RunResult:
    records: list
    snapshots: list
    state: SimState
    steps: int


def run(initial, profile, params, config, *, exps=None, interior_limit=None,
        snapshot_stride=None):
    """Integrate from initial data to t_end, recording diagnostics.

    Diagnostics are recorded at t = 0, every output_stride steps, and at
    the final time.  Snapshots keep the first and last states, plus
    every snapshot_stride-th step when that is given.  Deterministic:
    identical inputs produce identical histories.
    """
    if config.n != profile.n_cells:
        raise ValidationError(
            f"solver grid n={config.n} does not match the profile's "
            f"{profile.n_cells} cells")
    if exps is None:
        exps = diagnostics.exponents(params)

    state = SimState(t=0.0, r=np.array(initial.r0, dtype=float),
                     v=np.array(initial.v0, dtype=float))

    def record(s):
        v_t = velocity_time_derivative(s, profile, params)
        return diagnostics.make_record(
            s, profile, params, exps, v_t, interior_limit=interior_limit)

    records = [record(state)]
    snapshots = [(0, state)]
    n_steps = 0
    t_end = float(config.t_end)
    cutoff = t_end - 1e-12 * max(t_end, 1.0)
    try:
        while state.t < cutoff:
            dt = cfl_dt(state, profile, params, config)
            dt = min(dt, t_end - state.t)
            state = step(state, profile, params, config, dt=dt)
            n_steps += 1
            if snapshot_stride and n_steps % snapshot_stride == 0:
                snapshots.append((n_steps, state))
            if n_steps % config.output_stride == 0 or state.t >= cutoff:
                records.append(record(state))
    except NumericalError as exc:
        # leave a partial history on the exception so callers can dump it
        if snapshots[-1][0] != n_steps:
            snapshots.append((n_steps, state))
        exc.partial = RunResult(records=records, snapshots=snapshots,
                                state=state, steps=n_steps)
        raise

    if snapshots[-1][0] != n_steps:
        snapshots.append((n_steps, state))
    return RunResult(records=records, snapshots=snapshots, state=state,
                     steps=n_steps)
