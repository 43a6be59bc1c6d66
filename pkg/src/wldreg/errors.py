"""Exception types raised across the package."""


class WldRegError(Exception):
    """Base class for all errors raised by wldreg."""


class DimensionMismatch(WldRegError, ValueError):
    pass


class NotSymmetric(WldRegError, ValueError):
    pass


class NotPositiveDefinite(WldRegError, ArithmeticError):
    """A Cholesky pivot was <= 0. Callers may retry with a larger jitter."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class InvalidGamma(WldRegError, ValueError):
    pass


class BatchTooSmall(WldRegError, ValueError):
    pass


class LabelOutOfRange(WldRegError, ValueError):
    pass


class SingleClass(WldRegError, ValueError):
    pass


class BadMagic(WldRegError, ValueError):
    pass


class TruncatedFile(WldRegError, ValueError):
    pass


class CountMismatch(WldRegError, ValueError):
    pass


class ParseError(WldRegError, ValueError):
    """Malformed CSV input; ``row`` and ``col`` are 1-based when known."""

    def __init__(self, message, row=None, col=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if col is not None:
            where.append(f"column {col}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.col = col


class NonIntegerLabel(ParseError):
    pass


class SchemaError(WldRegError, ValueError):
    """Invalid experiment config; ``key`` names the offending field."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class UnknownVariant(SchemaError):
    pass
