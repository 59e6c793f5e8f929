"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Shapes, dimensions or parameters that do not fit together."""


class ValidationError(ValueError):
    """A numerical precondition (unitarity, normalization, ...) failed.

    ``where`` names the offending site, index or field when known.
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class WrapError(ValueError):
    """A power or time horizon long enough to wrap around the periodic torus."""


class GaugeObstructionError(ValueError):
    """Phases that cannot be gauged away on the periodic truncation."""

    def __init__(self, message, holonomy):
        super().__init__(message)
        self.holonomy = holonomy
