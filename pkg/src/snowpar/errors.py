"""Shared exception types.

Everything derives from ValueError so callers that do not care about the
distinction can catch one base class.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad sizes, unknown names, out-of-range settings."""


class BoundsError(ValueError):
    """Inconsistent constraint bounds, e.g. a lower bound above an upper bound
    in a mode that does not define a resolution order."""


class DataError(ValueError):
    """Malformed or rejected input data."""
