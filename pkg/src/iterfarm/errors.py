"""Exception types shared across the package."""

from __future__ import annotations


class FarmError(Exception):
    """Base class for every error this package raises deliberately."""


class ListTooShort(FarmError):
    """The map list has fewer elements than there are workers."""


class InitFailed(FarmError):
    """A problem's init() reported failure."""


class IterationLimitExceeded(FarmError):
    """The iteration safety bound was reached before the stop condition."""


class MissingJobImplementation(FarmError):
    """A job case within max_job_case has no complete callback family."""


class CodecMismatch(FarmError):
    """encode/decode of a problem value does not round-trip."""


class TransportFailure(FarmError):
    """A message could not be delivered or collected."""


class MalformedFrame(TransportFailure):
    """A wire frame is truncated, oversized, or of unknown type."""


class ZeroDiagonal(FarmError):
    """The coefficient matrix has a zero on its main diagonal.

    The offending row is reported 1-based, matching the usual way people
    talk about matrix rows; ``row`` carries that number.
    """

    def __init__(self, row: int):
        super().__init__(f"zero diagonal entry at row {row} (1-based)")
        self.row = row


class NotConverged(FarmError):
    """An iterative solve hit its iteration budget without converging."""


class MatrixFormatError(FarmError):
    """A linear-system text file is malformed or dimensionally inconsistent."""
