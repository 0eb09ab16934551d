"""Physical parameters of the viscous gaseous-star model.

The gas is a polytrope with adiabatic exponent ``gamma`` and
density-degenerate shear/bulk viscosities ``nu1 * rho**theta`` and
``nu2 * rho**theta``.  Units are chosen so the pressure constant and the
gravitational constant are both one.
"""

from dataclasses import dataclass, field

from .errors import ValidationError

GAMMA_MIN = 4.0 / 3.0
GAMMA_MAX = 2.0


@dataclass(frozen=True)
class ModelParams:
    """Validated bundle of model constants.

    Parameters
    ----------
    gamma : float
        Adiabatic exponent, restricted to (4/3, 2).
    theta : float
        Degeneracy exponent of the viscosity coefficients, in (0, gamma/2].
    nu1, nu2 : float
        Shear and bulk viscosity prefactors, both positive.

    Derived attributes ``nu = 4*nu1/3 + nu2`` (longitudinal coefficient)
    and ``sigma = min(2*nu1/3, nu2)`` (coercivity constant of the
    dissipation quadratic form) are filled in automatically.
    """

    gamma: float
    theta: float
    nu1: float
    nu2: float
    nu: float = field(init=False)
    sigma: float = field(init=False)

    def __post_init__(self):
        if not GAMMA_MIN < self.gamma < GAMMA_MAX:
            raise ValidationError(
                f"gamma must satisfy 4/3 < gamma < 2, got {self.gamma}")
        if not 0.0 < self.theta <= self.gamma / 2.0:
            raise ValidationError(
                f"theta must satisfy 0 < theta <= gamma/2, got {self.theta}")
        if not self.nu1 > 0.0:
            raise ValidationError(f"nu1 must be positive, got {self.nu1}")
        if not self.nu2 > 0.0:
            raise ValidationError(f"nu2 must be positive, got {self.nu2}")
        object.__setattr__(self, "nu", 4.0 * self.nu1 / 3.0 + self.nu2)
        object.__setattr__(self, "sigma", min(2.0 * self.nu1 / 3.0, self.nu2))

    @property
    def polytropic_index(self):
        """Lane-Emden index n = 1/(gamma - 1) of the background star."""
        return 1.0 / (self.gamma - 1.0)
