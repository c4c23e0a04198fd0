"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class InhibitedFamilyError(ValidationError):
    """The penalty form has a trivial kernel, so no limit problem exists."""


class SingularGapError(ValueError):
    """A gap quantity degenerates (division by a vanishing separation)."""


class RootBracketError(RuntimeError):
    """A root finder could not bracket the requested root."""


class SizeLimitError(RuntimeError):
    """Dense operation requested above the configured size cap."""


class ConfigurationError(ValueError):
    """Model configuration is inconsistent with the requested computation."""


class ConditioningError(RuntimeError):
    """A matrix that must be positive definite is numerically indefinite."""
