"""Exception types shared across the package."""


class GandecError(Exception):
    """Base class for all domain errors raised by this package."""


class LengthMismatch(GandecError, ValueError):
    """An input sequence does not have the required length."""


class RankDeficient(GandecError, ValueError):
    """A parity-check matrix has linearly dependent rows."""


class NotPrimitive(GandecError, ValueError):
    """A polynomial does not generate the full multiplicative group."""


class InvalidParameters(GandecError, ValueError):
    """Code-construction parameters are out of range or inconsistent."""


class ParseError(GandecError, ValueError):
    """A text input could not be parsed.

    ``line`` is the 1-based line number when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InconsistentDegrees(GandecError, ValueError):
    """Degree lists in an alist file disagree with its index lists."""


class LayoutMismatch(GandecError, ValueError):
    """Serialized weights do not match the target code's graph layout."""


class NonFinite(GandecError, ArithmeticError):
    """A recorded computation produced NaN or infinity."""


class TooLarge(GandecError, ValueError):
    """A brute-force operation was requested beyond its feasible size."""


class UsageError(GandecError, ValueError):
    """Bad command-line usage."""
