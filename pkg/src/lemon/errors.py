"""Exception types shared across the package."""


class LemonError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(LemonError):
    """Malformed or inconsistent data: bad files, bad values, broken invariants."""


class UsageError(LemonError):
    """Caller error: unknown names, invalid parameter combinations."""
