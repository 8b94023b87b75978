"""Exception types shared across the package."""


class QuadCtrlError(Exception):
    """Base class for all package errors."""


class InvalidInputError(QuadCtrlError, ValueError):
    """Malformed or inconsistent model input."""


class NotControllableError(QuadCtrlError):
    """Raised when a construction requires a controllable system.

    The failing :class:`~quadctrl.controllability.KalmanReport` is kept on
    ``report`` so callers can inspect the reachable subspace.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NumericalFailure(QuadCtrlError):
    """A numerical routine could not meet its accuracy contract."""

    def __init__(self, message, diagnosis=None, **details):
        super().__init__(message)
        self.diagnosis = diagnosis or message
        self.details = details


class TruncationError(NumericalFailure):
    """Fock-space population leaked into the truncation boundary."""
