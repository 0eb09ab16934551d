"""Energy functionals, decay exponents, and convergence tracking.

Everything here is a pure function of a state snapshot plus the
equilibrium profile: predicted algebraic decay exponents for the
perturbation norms, the higher-order energy ``E`` whose boundedness is
the nonlinear-stability statement, the zeroth-order energy density
``eta`` with its two-sided Taylor bounds, the time-weighted dissipation
functional ``D``, pointwise convergence metrics, and a log-log fitter
that extracts empirical decay rates from a recorded history.
"""

from collections.abc import Mapping
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import ValidationError
from .numerics import node_gradient, node_second_derivative
from .state import geometry

# half-width of the box |r_x - 1|, |r/x - 1| <= 1/2 where the Taylor
# bounds on eta are checked; outside it they are reported, not asserted
REGIME_HALF_WIDTH = 0.5


@dataclass(frozen=True)
class ExponentSet:
    """Predicted decay exponents for one (gamma, theta, iota) choice.

    alpha, beta, varsigma are the intermediate exponents of the decay
    analysis; a is the five-way minimum governing velocity-gradient
    decay.  Each tracked quantity decays like (1+t)**(-rate) with the
    rate given by the properties below (all rates apply to the squared
    quantities stored in DiagnosticsRecord).
    """

    gamma: float
    theta: float
    iota: float
    alpha: float
    beta: float
    varsigma: float
    a: float
    b_grid: tuple

    @property
    def r_rate(self):
        """Rate for sup x|r - x|**2."""
        g, th = self.gamma, self.theta
        return (g - 1.0 + self.alpha - th) / (g + self.alpha - th) * self.beta

    @property
    def v_rate(self):
        """Rate for sup x v**2."""
        return 0.5 * self.beta

    @property
    def rx_rate(self):
        """Rate for sup over the interior interval of |r_x - 1|**2."""
        return self.beta - 1.0

    @property
    def vr_rate(self):
        """Rate for sup of |v_x/r_x|**2 + |v/r|**2."""
        return self.a

    @property
    def boundary_rate(self):
        """Rate for the unsquared boundary error |R(t) - R_bar|."""
        return 0.5 * self.r_rate

    def rho_rate(self, b):
        """Rate for sup rho_bar**(-b) |rho - rho_bar|**2."""
        g, th = self.gamma, self.theta
        return min(0.5 * self.beta
                   - max(0.0, 3.0 * g - 5.0 + 2.0 * b) / (2.0 * (g - th)),
                   self.beta - 1.0)

    def predicted_rates(self):
        """Map each DiagnosticsRecord series key to its predicted rate."""
        rates = {
            "sup_r_err": self.r_rate,
            "sup_v": self.v_rate,
            "sup_rx_err": self.rx_rate,
            "vr_sup": self.vr_rate,
        }
        for i, b in enumerate(self.b_grid):
            rates[f"rho_err_sup_{i}"] = self.rho_rate(b)
        return rates


def exponents(params, *, iota=None, b_grid=None):
    """Decay exponents for the given viscosity/pressure parameters.

    iota defaults to its largest admissible value (2 gamma - 2 -
    theta)/8, which maximizes the guaranteed rates.  b_grid weights the
    density-error metrics; entries must lie in [0, 2 - gamma] and
    default to that interval's endpoints plus midpoint.
    """
    g, th = params.gamma, params.theta
    iota_cap = (2.0 * g - 2.0 - th) / 8.0
    if iota is None:
        iota = iota_cap
    if not 0.0 < iota <= iota_cap + 1e-15:
        raise ValidationError(
            f"iota must lie in (0, {iota_cap:.6g}], got {iota}")

    alpha = min(g - 1.0 + th, 2.0 * (g - 1.0)) - iota
    beta = 1.0 + (alpha - iota) / (g - th)
    varsigma = min(1.0, 0.5 * beta
                   + 0.5 * (beta - 1.0) * min(1.0, (g - th) / alpha))
    a = min(
        beta - 1.0,
        (g - 1.0 + alpha - th) / (g + alpha - th) * beta,
        (3.0 * beta + varsigma) / 4.0
        - (beta - varsigma) / (4.0 * alpha)
        * max(0.0, 4.0 * th - 4.0 * (g - 1.0) - alpha),
        beta - (beta - varsigma) / (2.0 * alpha)
        * max(0.0, 2.0 * th - 2.0 * (g - 1.0)),
        0.5 * beta - beta / (2.0 * (g + alpha - th))
        * max(0.0, 4.0 * th - g - 1.0),
    )

    if b_grid is None:
        b_grid = (0.0, 0.5 * (2.0 - g), 2.0 - g)
    b_grid = tuple(float(b) for b in b_grid)
    for b in b_grid:
        if not -1e-12 <= b <= 2.0 - g + 1e-12:
            raise ValidationError(
                f"density-error weight b must lie in [0, {2.0 - g:.6g}], "
                f"got {b}")
    return ExponentSet(gamma=g, theta=th, iota=float(iota), alpha=alpha,
                       beta=beta, varsigma=varsigma, a=a, b_grid=b_grid)


@dataclass(frozen=True, eq=False)
class DiagnosticsRecord:
    """One row of the time-series output.

    All squared-error metrics, so every field is nonnegative up to
    quadrature roundoff.  rho_err_sup holds one entry per b_grid
    weight, in order.
    """

    t: float
    E: float
    eta_int: float
    eta_lower_ok: bool
    eta_upper_ok: bool
    eta_in_regime: bool
    D: float
    sup_r_err: float
    sup_v: float
    sup_rx_err: float
    R_t: float
    rho_err_sup: tuple
    vr_sup: float


class EtaIntegral(NamedTuple):
    value: float
    lower_ok: bool
    upper_ok: bool
    in_regime: bool


def _eta_bracket(s, q, gamma):
    """Potential part of eta as a function of s = r/x, q = r_x.

    Zero with vanishing gradient at (1, 1); the constant term makes the
    equilibrium the exact minimum for gamma > 4/3.
    """
    return (s ** (2.0 - 2.0 * gamma) * q ** (1.0 - gamma) / (gamma - 1.0)
            + q / s**2 - 4.0 / s - (4.0 - 3.0 * gamma) / (gamma - 1.0))


@lru_cache(maxsize=None)
def eta_upper_constant(gamma):
    """Box constant for the upper Taylor bound of the eta bracket.

    Supremum of bracket / [(s-1)**2 + (q-1)**2] over the regime box on
    a 201x201 grid, padded 0.1% to cover off-grid points.  Cached per
    gamma since it is reused at every output step.
    """
    grid = np.linspace(1.0 - REGIME_HALF_WIDTH, 1.0 + REGIME_HALF_WIDTH, 201)
    s, q = np.meshgrid(grid, grid, indexing="ij")
    dist2 = (s - 1.0) ** 2 + (q - 1.0) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = _eta_bracket(s, q, gamma) / dist2
    ratio[dist2 == 0.0] = 0.0
    return float(np.max(ratio) * 1.001)


def eta_integral(state, profile, params):
    """Integral of the zeroth-order energy density, with bound checks.

    eta = x**2 (rho_bar v**2 / 2 + rho_bar**gamma * bracket(r/x, r_x)).
    Returns the trapezoid integral plus nodewise verification of the
    quadratic lower bound (3 gamma - 4)/4 * [2(r/x - 1)**2 + (r_x-1)**2]
    and the upper bound C(gamma) * [(r/x - 1)**2 + (r_x - 1)**2] on the
    bracket.  Both bounds are only claimed inside the regime box, so
    out-of-regime nodes are skipped and flagged through in_regime.
    """
    rx, rox, _ = geometry(state, profile)
    g = params.gamma
    s, q = rox, rx
    x, rho = profile.x, profile.rho_bar

    bracket = _eta_bracket(s, q, g)
    eta = x**2 * (0.5 * rho * state.v**2 + rho**g * bracket)
    value = float(np.trapezoid(eta, dx=profile.dx))

    node_ok = (np.abs(q - 1.0) <= REGIME_HALF_WIDTH) & (
        np.abs(s - 1.0) <= REGIME_HALF_WIDTH)
    in_regime = bool(np.all(node_ok))

    # absolute roundoff allowance: the bracket is a cancellation of
    # order-one terms, so near equilibrium it carries ~eps noise
    magnitude = (s ** (2.0 - 2.0 * g) * q ** (1.0 - g) / (g - 1.0)
                 + q / s**2 + 4.0 / s + abs(4.0 - 3.0 * g) / (g - 1.0))
    slack = 32.0 * np.finfo(float).eps * magnitude

    dist2 = (s - 1.0) ** 2 + (q - 1.0) ** 2
    lower = 0.25 * (3.0 * g - 4.0) * (2.0 * (s - 1.0) ** 2 + (q - 1.0) ** 2)
    upper = eta_upper_constant(g) * dist2
    lower_ok = bool(np.all((bracket + slack >= lower)[node_ok]))
    upper_ok = bool(np.all((bracket <= upper + slack)[node_ok]))
    return EtaIntegral(value, lower_ok, upper_ok, in_regime)


def energy_E(state, v_t_field, profile):
    """Higher-order perturbation energy whose boundedness is stability.

    Sum of the squared sup norm of (r_x - 1, v_x), the rho_bar**(2
    gamma - 1)-weighted L2 norms of (r/x)_x and r_xx, and the
    rho_bar-weighted L2 norm of v_t.  The v_t field must come from the
    momentum balance at this state, not from differencing in time.
    """
    rx, rox, _ = geometry(state, profile)
    dx = profile.dx
    vx = node_gradient(state.v, dx)
    sup_term = max(np.max(np.abs(rx - 1.0)), np.max(np.abs(vx))) ** 2

    weight = profile.rho_bar ** (2.0 * profile.gamma - 1.0)
    rox_x = node_gradient(rox, dx)
    rxx = node_second_derivative(state.r, dx)
    second = np.trapezoid(weight * (rox_x**2 + rxx**2), dx=dx)
    inertial = np.trapezoid(profile.rho_bar * np.asarray(v_t_field) ** 2,
                            dx=dx)
    return float(sup_term + second + inertial)


def decay_functional(state, profile, params):
    """Time-weighted dissipation functional.

    (1+t) * integral of x**2 (rho_bar v**2 + rho_bar**gamma dist2) plus
    the integral of x**2 rho_bar**theta dist2, where dist2 = (r/x -
    1)**2 + (r_x - 1)**2.  Stays of order its initial size for stable
    runs.
    """
    rx, rox, _ = geometry(state, profile)
    dist2 = (rox - 1.0) ** 2 + (rx - 1.0) ** 2
    x2, rho = profile.x**2, profile.rho_bar
    dx = profile.dx
    first = np.trapezoid(
        x2 * (rho * state.v**2 + rho**params.gamma * dist2), dx=dx)
    second = np.trapezoid(x2 * rho**params.theta * dist2, dx=dx)
    return float((1.0 + state.t) * first + second)


def convergence_metrics(state, profile, exps, *, interior_limit=None):
    """Pointwise squared-error metrics tracked against the predicted rates.

    interior_limit bounds the interval for the flow-map-gradient sup
    (the gradient estimate degenerates toward the vacuum boundary) and
    defaults to half the star radius.  The density metric compares the
    moved-frame density rho_bar * (G) against rho_bar through Q = G - 1,
    weighted by rho_bar**(-b) per b_grid entry.
    """
    rx, rox, compression = geometry(state, profile)
    x, rho = profile.x, profile.rho_bar
    r, v = state.r, state.v
    dx = profile.dx
    if interior_limit is None:
        interior_limit = 0.5 * profile.radius

    q_field = compression - 1.0

    vx = node_gradient(v, dx)
    v_over_r = np.empty_like(v)
    v_over_r[0] = vx[0] / rx[0]
    v_over_r[1:] = v[1:] / r[1:]

    inner = x <= interior_limit * (1.0 + 1e-12)
    rho_err = tuple(
        float(np.max(rho ** (2.0 - b) * q_field**2)) for b in exps.b_grid)
    return {
        "sup_r_err": float(np.max(x * (r - x) ** 2)),
        "sup_v": float(np.max(x * v**2)),
        "sup_rx_err": float(np.max((rx[inner] - 1.0) ** 2)),
        "R_t": float(r[-1]),
        "rho_err_sup": rho_err,
        "vr_sup": float(np.max((vx / rx) ** 2 + v_over_r**2)),
    }


def make_record(state, profile, params, exps, v_t_field, *,
                interior_limit=None):
    """Bundle every diagnostic of one snapshot into a DiagnosticsRecord."""
    eta = eta_integral(state, profile, params)
    metrics = convergence_metrics(state, profile, exps,
                                  interior_limit=interior_limit)
    return DiagnosticsRecord(
        t=float(state.t),
        E=energy_E(state, v_t_field, profile),
        eta_int=eta.value,
        eta_lower_ok=eta.lower_ok,
        eta_upper_ok=eta.upper_ok,
        eta_in_regime=eta.in_regime,
        D=decay_functional(state, profile, params),
        **metrics)


def _series(history, key):
    """Extract (t, values) for one series key from a history.

    history is either a sequence of DiagnosticsRecord or a mapping of
    column name to array (as read back from a CSV).  Density metrics
    are addressed as rho_err_sup_<i> with i indexing b_grid.
    """
    if isinstance(history, Mapping):
        try:
            t = np.asarray(history["t"], dtype=float)
            values = np.asarray(history[key], dtype=float)
        except KeyError as err:
            raise ValidationError(f"history has no column {err}") from None
        return t, values
    t = np.array([rec.t for rec in history], dtype=float)
    if key.startswith("rho_err_sup_"):
        idx = int(key.rsplit("_", 1)[1])
        try:
            values = np.array([rec.rho_err_sup[idx] for rec in history])
        except IndexError:
            raise ValidationError(
                f"density-error index {idx} out of range") from None
        return t, values
    if not history or not hasattr(history[0], key):
        raise ValidationError(f"records have no field {key!r}")
    return t, np.array([getattr(rec, key) for rec in history], dtype=float)


def fit_decay(history, quantity_key, t_min=0.0):
    """Least-squares power-law fit of one recorded quantity.

    Fits log(quantity) against log(1+t) over the records with t >=
    t_min and returns (slope, intercept, r_squared); a decay like
    (1+t)**(-p) comes back with slope -p.  Requires at least 10 records
    in the window, all positive: a nonpositive value means the quantity
    has hit the solver's accuracy floor, so the fit would be
    meaningless (raise, let the caller widen t_min or report a floor).
    """
    t, values = _series(history, quantity_key)
    mask = t >= t_min - 1e-12
    if int(np.sum(mask)) < 10:
        raise ValidationError(
            f"need at least 10 records with t >= {t_min:.6g} to fit "
            f"{quantity_key}, found {int(np.sum(mask))}")
    t_w, q_w = t[mask], values[mask]
    if np.any(q_w <= 0.0):
        raise ValidationError(
            f"nonpositive {quantity_key} values in the fit window: the "
            "series has reached the accuracy floor; raise t_min or report "
            "the floor instead of a rate")
    xs = np.log1p(t_w)
    ys = np.log(q_w)
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = intercept + slope * xs
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    return float(slope), float(intercept), float(r_squared)
