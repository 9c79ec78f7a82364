"""Exception hierarchy.

Input problems derive from :class:`InputError` (a ``ValueError``); numerical
breakdowns derive from :class:`NumericalError`. The CLI maps the two families
to distinct exit codes.
"""


class PsplineError(Exception):
    """Base class for all package errors."""


class InputError(PsplineError, ValueError):
    """Invalid user input (shapes, domains, malformed files)."""


class UnsupportedOrderError(InputError):
    pass


class DomainError(InputError):
    pass


class ShapeError(InputError):
    pass


class InsufficientDataError(InputError):
    pass


class NumericalError(PsplineError, ArithmeticError):
    """A numerical procedure could not produce a valid result."""


class DegenerateKnotsError(NumericalError):
    pass


class IllConditionedError(NumericalError):
    pass


class NotPSDError(NumericalError):
    pass


class CollinearDesignError(NumericalError):
    pass


class InsufficientDFError(NumericalError):
    pass


class DegenerateDirectionError(NumericalError):
    """LARS could not compute an equiangular direction.

    ``indices`` holds the active columns involved.
    """

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(int(i) for i in indices)


class IterationsExceededError(NumericalError):
    def __init__(self, message, max_change=None, sweeps=None):
        super().__init__(message)
        self.max_change = max_change
        self.sweeps = sweeps


class InvariantError(PsplineError, AssertionError):
    """An internal post-condition failed."""
