"""Lagrangian simulation state and the fields derived from it.

The state is the pair (r, v) on the fixed node grid of a background
profile: r maps each equilibrium radius x to the current radius of the
fluid sphere enclosing the same mass, and v is its velocity.  All
derived quantities (Lagrangian density, relative compression, the
weighted viscous-flux potential) follow from (r, v) and the background
without any further evolution information.

Conventions used throughout the package: discrete d/dx is centered at
interior nodes and one-sided second-order at the ends; the ratio r/x at
the origin is replaced by its limit, the discrete r_x at the first
node; tail and mass integrals use the composite trapezoid rule.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import MeshInversionError, ValidationError
from .numerics import node_gradient


def flow_gradient(r, dx):
    """Discrete r_x at the nodes."""
    return node_gradient(r, dx)


def radius_ratio(r, x, rx):
    """r/x with the L'Hopital limit r_x(0) substituted at the origin."""
    out = np.empty_like(r)
    out[0] = rx[0]
    out[1:] = r[1:] / x[1:]
    return out


def check_mesh(r, dx):
    """Raise when the discrete flow map is not strictly expanding in x."""
    bad = np.flatnonzero(np.diff(r) <= 0.0)
    if bad.size:
        raise MeshInversionError(
            f"mesh inversion between nodes {bad[0]} and {bad[0] + 1}",
            node=int(bad[0]))
    rx = flow_gradient(r, dx)
    bad = np.flatnonzero(rx <= 0.0)
    if bad.size:
        raise MeshInversionError(
            f"mesh inversion: discrete r_x <= 0 at node {bad[0]}",
            node=int(bad[0]))
    return rx


@dataclass(frozen=True, eq=False)
class SimState:
    """Flow map and velocity at the grid nodes at one instant.

    Construction validates the boundary pins r(0) = v(0) = 0 and strict
    monotonicity of r; states that fail are outside the model class.
    """

    t: float
    r: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        r, v = np.asarray(self.r, float), np.asarray(self.v, float)
        if r.shape != v.shape or r.ndim != 1 or r.size < 4:
            raise ValidationError("r and v must be equal-length 1-d node arrays")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(v))):
            raise ValidationError("state contains non-finite values")
        if r[0] != 0.0:
            raise ValidationError(f"r(0) must be 0, got {r[0]}")
        if v[0] != 0.0:
            raise ValidationError(f"v(0) must be 0, got {v[0]}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "v", v)
        dx = 1.0  # monotonicity does not depend on the grid spacing
        check_mesh(r, dx)

    @classmethod
    def at_rest(cls, profile):
        """The unperturbed equilibrium state r = x, v = 0."""
        return cls(t=0.0, r=profile.x.copy(), v=np.zeros_like(profile.x))

    @property
    def boundary_radius(self):
        return float(self.r[-1])


@dataclass(frozen=True, eq=False)
class DerivedFields:
    """Pointwise fields computed from one state over a background.

    f is the Lagrangian density x**2 rho_bar / (r**2 r_x); Q is the
    relative compression x**2/(r**2 r_x) - 1, identically zero at the
    equilibrium map; Z is the weighted viscous-flux potential whose
    leading part is proportional to 1 - r_x; r_over_x carries the
    origin-limit convention.
    """

    f: np.ndarray
    Q: np.ndarray
    Z: np.ndarray
    r_over_x: np.ndarray


def geometry(state, profile):
    """(rx, rox, G) with G = x**2/(r**2 r_x) under the origin convention."""
    dx = profile.dx
    rx = check_mesh(state.r, dx)
    rox = radius_ratio(state.r, profile.x, rx)
    compression = 1.0 / (rox**2 * rx)
    return rx, rox, compression


def derived_density(state, profile):
    """Lagrangian density f = x**2 rho_bar / (r**2 r_x) at the nodes.

    The formulation conserves mass identically: f r**2 r_x recovers
    rho_bar x**2 to round-off whatever the state.  At the origin the
    limit f = rho_bar(0)/r_x(0)**3 applies; at the outer node f = 0.
    """
    _, _, compression = geometry(state, profile)
    return profile.rho_bar * compression


def compute_Q(state, profile):
    """Relative compression x**2/(r**2 r_x) - 1."""
    _, _, compression = geometry(state, profile)
    return compression - 1.0


def tail_integral(values, dx):
    """Integral of a node field from each node out to the last one.

    Reverse cumulative trapezoid on the uniform grid: out[i] holds the
    integral over [x_i, x_N], so out[-1] = 0 and constant input 1
    returns the remaining distance to the boundary exactly.
    """
    weights = 0.5 * (values[1:] + values[:-1]) * dx
    out = np.zeros_like(values)
    out[:-1] = np.cumsum(weights[::-1])[::-1]
    return out


def compute_Z(state, profile, params):
    """Weighted viscous-flux potential.

    Z = (nu/theta) (r/x)**c G**theta - nu/theta
        - rho_bar(x)**(-theta) * integral_x^radius rho_bar(y) (r/y)**(c-2) v dy,

    with c = 4 nu1 theta / nu and G = x**2/(r**2 r_x).  The tail
    integral uses the trapezoid rule.  It vanishes identically at the
    stationary state.  At the outer node the degenerate-weight tail
    term has limit zero and is set so; the origin entry uses the
    radius-ratio limit convention and is excluded from diagnostics.
    """
    _, rox, compression = geometry(state, profile)
    nu, nu1, theta = params.nu, params.nu1, params.theta
    c = 4.0 * nu1 * theta / nu
    lead = (nu / theta) * (rox**c * compression**theta - 1.0)

    tail = tail_integral(profile.rho_bar * rox ** (c - 2.0) * state.v,
                         profile.dx)
    out = np.empty_like(lead)
    out[:-1] = lead[:-1] - profile.rho_bar[:-1] ** (-theta) * tail[:-1]
    out[-1] = lead[-1]
    return out


def derived_fields(state, profile, params):
    rx, rox, compression = geometry(state, profile)
    return DerivedFields(
        f=profile.rho_bar * compression,
        Q=compression - 1.0,
        Z=compute_Z(state, profile, params),
        r_over_x=rox)


def reconstruct_eulerian(state, profile, r_query):
    """Recover the Eulerian (density, velocity) at radius r_query.

    Inverts the monotone flow map by bisection on its monotone cubic
    interpolant, then evaluates the Lagrangian density there.  Queries
    beyond the moving boundary r(radius, t) lie in the vacuum exterior
    and are rejected.
    """
    r_query = float(r_query)
    boundary = state.boundary_radius
    if r_query < 0.0:
        raise ValidationError(f"query radius must be nonnegative, got {r_query}")
    if r_query > boundary:
        raise ValidationError(
            f"query radius {r_query:.6g} lies in the vacuum exterior "
            f"(moving boundary at {boundary:.6g})")

    r_interp = PchipInterpolator(profile.x, state.r)
    rx_interp = r_interp.derivative()
    v_interp = PchipInterpolator(profile.x, state.v)

    lo, hi = 0.0, profile.radius
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if r_interp(mid) >= r_query:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-14 * profile.radius:
            break
    x_star = 0.5 * (lo + hi)

    rx_star = float(rx_interp(x_star))
    if rx_star <= 0.0:
        raise MeshInversionError("interpolated flow map is not expanding")
    if x_star < 1e-12 * profile.radius:
        rho = profile.rho_bar[0] / rx_star**3
    else:
        rho = (x_star**2 * float(profile.rho_at(x_star))
               / (float(r_interp(x_star)) ** 2 * rx_star))
    return float(rho), float(v_interp(x_star))
