"""Exception types shared across the package."""


class InputError(ValueError):
    """Raised when an argument violates an operation's preconditions."""


class ModelError(ValueError):
    """Raised when model data violates a declared invariant (bounds, signs, domains)."""
