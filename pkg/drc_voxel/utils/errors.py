class DrcError(Exception):
    """Base error; carries the CLI exit code for its category."""

    exit_code = 2


class UsageError(DrcError):
    exit_code = 1


class DataError(DrcError, ValueError):
    exit_code = 2


class DomainError(DataError):
    """Numeric input outside its mathematical domain (x not in [0,1], bad simplex, ...)."""


class GeometryMismatchError(DataError):
    pass


class CheckFailure(DrcError):
    exit_code = 3
