"""Exception hierarchy shared across the package.

Three top-level families map onto the CLI exit codes: configuration or
input validation problems (exit 1), numerical failures during a run
(exit 2), and verification or acceptance failures (exit 3).
"""


class StarSimError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(StarSimError, ValueError):
    """Bad user input: parameter out of range, malformed config, bad query."""


class MassConstraintError(ValidationError):
    """Initial density is incompatible with the background star's mass."""


class NumericalError(StarSimError, RuntimeError):
    """The computation itself broke down (mesh inversion, solver failure)."""


class MeshInversionError(NumericalError):
    """The Lagrangian flow map lost monotonicity between two nodes."""

    def __init__(self, message, *, node=None):
        super().__init__(message)
        self.node = node


class VerificationFailure(StarSimError, AssertionError):
    """An invariant or acceptance check did not hold."""
