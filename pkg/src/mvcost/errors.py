"""Exception hierarchy shared by the library and the CLI."""


class MvcostError(Exception):
    """Base class for all library errors."""


class InputError(MvcostError, ValueError):
    """Malformed or inadmissible input (bad channel file, parameter out of range)."""


class InfeasibleError(InputError):
    """No input distribution or type satisfies the cost constraint."""


class SizeError(InputError):
    """An exact computation was requested on an instance above its size cap."""


class BlocklengthError(InputError):
    """The blocklength is too small for the requested construction."""

    def __init__(self, message, min_n=None):
        super().__init__(message)
        self.min_n = min_n


class ConvergenceError(MvcostError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NumericError(MvcostError):
    """Quadrature or bracketing failed to reach the requested accuracy."""


class DerivativeError(MvcostError):
    """Multiplier and finite-difference derivatives disagree."""


class DegenerateError(MvcostError):
    """The optimizer found no strict improvement where one was expected."""


class CalibrationError(MvcostError):
    """Feedback cost calibration could not balance the second-half cost."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
