"""Exception taxonomy shared across the package.

Grouped by how the command line maps them to exit codes: parameter and
config problems (3), tag-file format and integrity problems (4), and
numerical or degenerate-data problems (5).
"""


class ZeroHeraldError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ZeroHeraldError):
    """A parameter value is outside its allowed domain."""


class ConfigError(ValidationError):
    """A config file is malformed, has unknown keys, or bad values."""


class CapacityError(ValidationError):
    """A requested run would overflow the 64-bit timestamp range."""


class FormatError(ZeroHeraldError):
    """A tag file has a bad magic string, version, or record layout."""


class IntegrityError(ZeroHeraldError):
    """A tag stream's content violates its own invariants."""


class InsufficientReferenceError(IntegrityError):
    """Fewer than two reference tags: the pulse train cannot be rebuilt."""


class ClockGlitchError(IntegrityError):
    """Reference tag spacing deviates too far from the median period."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class NumericalError(ZeroHeraldError):
    """A computation failed or produced an out-of-domain result."""


class DegenerateInputError(NumericalError):
    """Inputs make the requested quantity undefined (division by zero)."""


class NoSolutionError(NumericalError):
    """An inversion target lies outside the attainable range."""


class EmptyTableError(NumericalError):
    """An event table has no live pulses to compute rates over."""


class HeraldUndefinedError(NumericalError):
    """No herald events occurred, so conditional rates are undefined."""


class FitConvergenceError(NumericalError):
    """The curve fit failed to converge; carries the residual report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class WrongShapeError(NumericalError):
    """A fit has the wrong sign of amplitude for the requested quantity."""
