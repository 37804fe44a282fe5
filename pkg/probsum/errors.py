"""
Exception hierarchy for probsum.

Each error also derives from the closest builtin so callers that only know
about ValueError / OverflowError / OSError keep working.
"""


class ProbsumError(Exception):
    """Base class for every error raised by probsum."""


class FormatError(ProbsumError, ValueError):
    """Invalid floating-point format parameters or format string."""


class FormatOverflowError(ProbsumError, OverflowError):
    """A value exceeds the largest finite number of the target format."""

    def __init__(self, value: float, limit: float, index: int = None, context: dict = None):
        self.value = value
        self.limit = limit
        self.index = index
        self.context = dict(context or {})
        super().__init__(self._message())

    def _message(self) -> str:
        msg = f"|{self.value!r}| exceeds format maximum {self.limit!r}"
        if self.index is not None:
            msg += f" at step k={self.index}"
        if self.context:
            msg += " (" + ", ".join(f"{k}={v}" for k, v in self.context.items()) + ")"
        return msg

    def with_index(self, index: int) -> "FormatOverflowError":
        return FormatOverflowError(self.value, self.limit, index, self.context)

    def with_context(self, **context) -> "FormatOverflowError":
        merged = {**self.context, **context}
        return FormatOverflowError(self.value, self.limit, self.index, merged)


class NotRepresentableError(ProbsumError, ValueError):
    """Summation input that is not a member of the emulated format."""


class ZeroInputError(ProbsumError, ZeroDivisionError):
    """Relative perturbation requested for an exact zero."""


class EmptyInputError(ProbsumError, ValueError):
    """An operation received an empty vector."""


class OrderRangeError(ProbsumError, ValueError):
    """Requested decomposition order outside 1..n-1."""


class SizeError(ProbsumError, ValueError):
    """Problem too large for a brute-force evaluation."""


class DomainError(ProbsumError, ValueError):
    """Bound parameters outside the domain of the formula."""


class MissingNormError(ProbsumError, ValueError):
    """A structural bound was evaluated without ||s_n||_2."""


class IoError(ProbsumError, OSError):
    """Writing experiment output failed."""


class UsageError(ProbsumError):
    """Bad command-line usage or malformed configuration."""
