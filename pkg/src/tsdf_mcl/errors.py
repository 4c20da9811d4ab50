"""Exception types shared across the package."""


class TsdfMclError(Exception):
    """Base class for all package-specific errors."""


class MapFormatError(TsdfMclError):
    """Raised when a serialized map (or a text resource) is malformed."""


class DegenerateFilterError(TsdfMclError):
    """Raised when the total particle weight is zero or non-finite.

    The caller decides the recovery policy (typically re-initialization);
    the filter never silently re-randomizes.
    """


class DegenerateSceneError(TsdfMclError):
    """Raised when free-space rejection sampling starves (acceptance < 0.1%)."""


class ConfigError(TsdfMclError):
    """Raised for invalid experiment configuration; carries the field name."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
