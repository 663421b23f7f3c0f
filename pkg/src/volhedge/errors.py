"""Exception types shared across the package."""


class VolhedgeError(Exception):
    """Base class for all package errors."""


class DomainError(VolhedgeError, ValueError):
    """Input outside the mathematical domain of an operation."""


class NumericsError(VolhedgeError, ArithmeticError):
    """A computation overflowed or produced non-finite values."""


class ConvergenceError(VolhedgeError, RuntimeError):
    """An iterative routine failed to converge."""


class GridError(VolhedgeError, ValueError):
    """A requested point falls outside a numerical grid."""


class ExtrapolationError(VolhedgeError, ValueError):
    """A query outside the maturity range covered by a surface."""


class PriceBoundsError(VolhedgeError, ValueError):
    """An option price violates its static no-arbitrage bounds."""


class FitError(VolhedgeError, RuntimeError):
    """A fit produced no admissible result."""


class DegenerateInstrumentError(VolhedgeError, ArithmeticError):
    """A hedge instrument carries no usable sensitivity at the current state
    (vanishing Gamma or Vega, or a vanishing risk denominator)."""


class SchemaError(VolhedgeError, ValueError):
    """A data file does not match its documented schema."""


class MissingArtifactError(VolhedgeError, FileNotFoundError):
    """A pipeline command requires output of a command not yet run."""
