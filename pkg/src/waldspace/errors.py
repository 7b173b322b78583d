"""Exception hierarchy.

Each exception carries the process exit code the command-line interface
uses when it escapes to the top level.
"""


class WaldError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class DomainError(WaldError, ValueError):
    """Invalid argument: wrong size, out-of-range parameter, bad index."""

    exit_code = 2


class NewickParseError(WaldError, ValueError):
    """Malformed Newick input.

    ``offset`` is the byte offset into the UTF-8 encoded input at which
    the problem was detected (``None`` when not tied to a position).
    """

    exit_code = 3

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class InvalidForestError(WaldError, ValueError):
    """A forest violates the wald-space conditions (e.g. coincident leaves)."""

    exit_code = 3


class NumericalError(WaldError, ArithmeticError):
    exit_code = 4


class NotPositiveDefiniteError(NumericalError):
    """A matrix expected to be symmetric positive definite is not."""


class SingularMetricError(NumericalError):
    """A metric tensor is (numerically) singular."""


class ConvergenceError(WaldError, RuntimeError):
    """An iterative method hit its iteration cap."""

    exit_code = 5
