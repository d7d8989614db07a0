"""Exception hierarchy.

The CLI maps these onto exit codes: validation problems exit with 2, solver
failures with 3 and fitting / identifiability problems with 4.
"""


class FluxcohError(Exception):
    """Base class for all package errors."""


class ValidationError(FluxcohError, ValueError):
    """Bad input data or parameters."""


class SolverError(FluxcohError):
    """A numerical solve failed (eigensolver, quadrature, root finding)."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class UnconvergedError(SolverError):
    """Truncated basis too small for the requested accuracy."""


class FitError(FluxcohError):
    """A least-squares fit failed to converge or is not meaningful."""


class UnidentifiableError(FitError):
    """The data cannot constrain the requested parameters."""
