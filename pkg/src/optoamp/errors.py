"""Exception hierarchy shared by all optoamp modules."""


class OptoampError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(OptoampError, ValueError):
    """Invalid model, drive set, or configuration file content."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class SingularSystemError(OptoampError, ArithmeticError):
    """The linear response is singular (probe sits on an instability pole)."""

    def __init__(self, omega, rcond):
        self.omega = omega
        self.rcond = rcond
        super().__init__(
            f"susceptibility matrix is singular at omega={omega!r} rad/s "
            f"(reciprocal condition number {rcond:.3e})"
        )


class InstabilityError(OptoampError, ArithmeticError):
    """Parameters sit on or beyond a parametric instability."""


class UnboundedGainError(OptoampError, ArithmeticError):
    """A gain limit diverges for the requested parameters."""


class DegenerateManifoldError(OptoampError, ValueError):
    """Sideband manifolds coincide, the perturbative expansion is undefined."""


class RangeError(OptoampError, ValueError):
    """A sweep does not bracket the feature an operation needs."""


class InsufficientSignalError(OptoampError, ValueError):
    """No data points remain above the signal threshold."""


class ShapeError(OptoampError, ValueError):
    """Array arguments have incompatible lengths."""


class BoundsError(OptoampError, ValueError):
    """A parameter vector lies outside its admissible bounds."""
