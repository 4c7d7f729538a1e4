"""Exception types shared across the package."""


class MarsdustError(Exception):
    """Base class for all errors raised by marsdust."""


class ValidationError(MarsdustError):
    """Invalid argument, parameter, or shape."""


class BoundsError(ValidationError):
    """A region or index lies outside its container."""


class DecodeError(MarsdustError):
    """A file could not be decoded (bad format, corruption, unsupported feature)."""


class EstimationError(MarsdustError):
    """A statistical estimate could not be formed from the given data."""


class ManifestError(MarsdustError):
    """A dataset manifest is missing, malformed, or inconsistent."""


class WeightsFormatError(MarsdustError):
    """A model weights file is corrupt or has an unsupported layout."""
