"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid model, measure, or configuration."""


class CapabilityError(ValidationError):
    """A valid request that this implementation does not support."""
