"""Exception hierarchy shared by every mintygym module."""


class MintyGymError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(MintyGymError, ValueError):
    """An argument violates a documented precondition."""


class OperatorFailureError(MintyGymError):
    """An operator callback returned non-finite values.

    The offending point is kept on ``point`` so callers can reproduce it.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class NumericalFailureError(MintyGymError):
    """A linear system could not be solved reliably."""


class UnsupportedStructureError(MintyGymError):
    """The game lacks the structure a mode requires (e.g. a single controller)."""


class InsufficientRecordsError(MintyGymError):
    """A diagnostic needs every iterate but the report was recorded sparsely."""


class GameFileError(MintyGymError):
    """A serialized game could not be parsed or failed validation."""
