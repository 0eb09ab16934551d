"""Admissible initial data around the equilibrium star.

Two perturbation families are provided.  The Lagrangian displacement
r0 = x (1 + eps g(x/R)) keeps the total mass equal to the equilibrium
mass identically, because the initial density is defined through the
flow map itself; it is the family the stability suites use.  The
velocity bump leaves the map at the identity and kicks the fluid with
v0 = eps x (R - x) shape, which satisfies the v(0) = 0 compatibility
requirement by construction.

reference_map inverts the cumulative-mass matching condition

    integral_0^{r0(x)} rho0(s) s**2 ds = integral_0^x rho_bar(s) s**2 ds

for a user-supplied initial density, by bisection on fine-grid
cumulative-mass tables built with the same piecewise-linear quadrature
on both sides.
"""

from dataclasses import dataclass, field

import numpy as np

from . import diagnostics, solver
from .errors import MassConstraintError, ValidationError
from .lane_emden import cumulative_shell_integral
from .state import SimState

KINDS = ("lagrangian_displacement", "velocity_bump")


@dataclass(frozen=True)
class Perturbation:
    """A small departure from the equilibrium state.

    shape holds polynomial coefficients in s = x/R, lowest order first.
    For the displacement kind the polynomial is the profile g itself;
    for the velocity bump it multiplies the compatibility-preserving
    envelope x (R - x).  A callable velocity(x) overrides the
    polynomial bump entirely (it is still scaled by epsilon and checked
    for v(0) = 0).
    """

    kind: str
    epsilon: float
    shape: tuple = (1.0,)
    velocity: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(
                f"perturbation kind must be one of {KINDS}, got {self.kind!r}")
        if not np.isfinite(self.epsilon):
            raise ValidationError("epsilon must be finite")
        coeffs = tuple(float(c) for c in self.shape)
        if not coeffs or not all(np.isfinite(c) for c in coeffs):
            raise ValidationError("shape must be a nonempty tuple of finite reals")
        object.__setattr__(self, "shape", coeffs)
        if self.velocity is not None and self.kind != "velocity_bump":
            raise ValidationError(
                "a velocity callable only makes sense for the velocity_bump kind")


@dataclass(frozen=True, eq=False)
class InitialData:
    """Node fields (r0, v0) and the perturbation energy they carry."""

    r0: np.ndarray
    v0: np.ndarray
    E0: float


def _shape_poly(shape, s):
    # coefficients are stored lowest order first
    return np.polynomial.polynomial.polyval(s, np.asarray(shape))


def make_initial(profile, params, perturbation, *, delta_bar=None):
    """Build initial data for one perturbation around the equilibrium.

    The displacement family moves the map, r0 = x (1 + eps g), and is
    rejected if the requested amplitude loses monotonicity.  The bump
    family moves only the velocity.  E0 is the perturbation energy at
    t = 0, evaluated with v_t taken from the momentum balance, and a
    configured smallness threshold delta_bar is enforced when given.
    """
    x, radius = profile.x, profile.radius
    s = x / radius

    if perturbation.kind == "lagrangian_displacement":
        g = _shape_poly(perturbation.shape, s)
        r0 = x * (1.0 + perturbation.epsilon * g)
        if np.any(np.diff(r0) <= 0.0):
            raise ValidationError(
                "rejected: displacement amplitude breaks monotonicity of r0")
        v0 = np.zeros_like(x)
    else:
        r0 = x.copy()
        if perturbation.velocity is not None:
            v0 = perturbation.epsilon * np.asarray(
                perturbation.velocity(x), dtype=float)
        else:
            v0 = perturbation.epsilon * x * (radius - x) * _shape_poly(
                perturbation.shape, s)
        if v0.shape != x.shape:
            raise ValidationError("velocity shape does not match the grid")
        if v0[0] != 0.0:
            raise ValidationError("rejected: velocity bump must vanish at x = 0")

    state = SimState(t=0.0, r=r0, v=v0)
    v_t = solver.velocity_time_derivative(state, profile, params)
    e0 = diagnostics.energy_E(state, v_t, profile)
    if delta_bar is not None and e0 > delta_bar:
        raise ValidationError(
            f"initial energy {e0:.3e} exceeds the smallness threshold "
            f"{delta_bar:.3e}")
    return InitialData(r0=r0, v0=v0, E0=e0)


def initial_vt(initial, profile, params):
    """v_t at t = 0 from the momentum balance at the initial state."""
    state = SimState(t=0.0, r=np.asarray(initial.r0, dtype=float),
                     v=np.asarray(initial.v0, dtype=float))
    return solver.velocity_time_derivative(state, profile, params)


def reference_map(rho0, profile, *, domain_radius=None, mass_tol=1e-6,
                  n_fine=16384, bisect_iters=60):
    """Mass-matched reference map for an initial density rho0.

    Both cumulative-mass tables (equilibrium target and rho0 source)
    are built on fine uniform grids with the identical piecewise-linear
    shell quadrature, so feeding the equilibrium density back returns
    the identity map to bisection tolerance and mass-preserving
    dilations invert exactly up to rounding.  rho0 is a callable on
    [0, domain_radius]; the default domain is the equilibrium support.
    """
    radius = profile.radius
    r_max = radius if domain_radius is None else float(domain_radius)
    if not r_max > 0.0:
        raise ValidationError("domain_radius must be positive")

    xf = np.linspace(0.0, radius, n_fine + 1)
    target_table = cumulative_shell_integral(xf, profile.rho_at(xf))

    yf = np.linspace(0.0, r_max, n_fine + 1)
    vals = np.asarray(rho0(yf), dtype=float)
    if vals.shape != yf.shape:
        raise ValidationError("rho0 must return one value per input point")
    if not np.all(np.isfinite(vals)):
        raise ValidationError("rho0 produced non-finite values")
    if np.any(vals < -1e-12 * np.max(vals)):
        raise ValidationError("rho0 must be nonnegative")
    source_table = cumulative_shell_integral(yf, np.clip(vals, 0.0, None))
    if np.any(np.diff(source_table) <= 0.0):
        raise ValidationError("cumulative mass of rho0 is not strictly increasing")

    total, want = source_table[-1], target_table[-1]
    if abs(total - want) > mass_tol * want:
        raise MassConstraintError(
            f"mass constraint violated: rho0 carries {total / want:.8f} "
            "of the equilibrium mass")

    targets = np.interp(profile.x, xf, target_table)
    lo = np.zeros_like(profile.x)
    hi = np.full_like(profile.x, r_max)
    for _ in range(bisect_iters):
        mid = 0.5 * (lo + hi)
        high_side = np.interp(mid, yf, source_table) >= targets
        hi = np.where(high_side, mid, hi)
        lo = np.where(high_side, lo, mid)
    r0 = 0.5 * (lo + hi)
    # both endpoints are known exactly: the center maps to the center and,
    # once the mass check has passed, the vacuum boundary to the boundary.
    # The table slope degenerates with the density there, which would let
    # interp round-off park the bisected root ~1e-8 inside the support.
    r0[0] = 0.0
    r0[-1] = r_max
    return r0
