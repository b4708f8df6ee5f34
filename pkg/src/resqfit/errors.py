"""Exception types shared across the toolkit."""


class ResqfitError(Exception):
    """Base class for all toolkit errors."""


class DomainError(ResqfitError, ValueError):
    """An argument lies outside the physically meaningful domain."""


class ValidationError(ResqfitError):
    """Input data violate a structural invariant."""


class FitError(ResqfitError):
    """A fit could not produce an acceptable result."""


class DataFormatError(ResqfitError):
    """A file could not be parsed."""
