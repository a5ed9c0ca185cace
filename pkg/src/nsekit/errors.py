"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures
to process status without inspecting messages: 2 for bad input, 3 for
numerical trouble, 4 for I/O.
"""


class NseKitError(Exception):
    exit_code = 3


class ValidationError(NseKitError, ValueError):
    """Input outside the documented domain of an operation."""

    exit_code = 2


class CapabilityError(ValidationError):
    """Request beyond what the implementation supports (order, size)."""


class NumericalError(NseKitError, ArithmeticError):
    exit_code = 3


class AccuracyError(NumericalError):
    """A tolerance could not be met; carries the best estimate."""

    def __init__(self, message, estimate=None, error_bound=None):
        super().__init__(message)
        self.estimate = estimate
        self.error_bound = error_bound


class BracketingError(NumericalError):
    """No sign change (or no transition) inside the supplied bracket."""


class DomainError(NumericalError):
    """A function left its domain; ``where`` holds the offending abscissa."""

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class GridResolutionError(NumericalError):
    """A density grid was too coarse or too short for the requested operation."""

    def __init__(self, message, factor=None):
        super().__init__(message)
        self.factor = factor


class ConstructionError(NumericalError):
    """An activation construction failed its own verification."""


class DegenerateConstructionError(ConstructionError):
    pass
