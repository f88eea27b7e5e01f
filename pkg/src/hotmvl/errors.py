"""Exception types shared across the package."""


class HotError(Exception):
    """Base class for errors raised by hotmvl."""


class DataError(HotError, ValueError):
    """Malformed or inconsistent input data (files, shapes, labels)."""


class NumericalError(HotError, ArithmeticError):
    """A computation produced non-finite values."""
