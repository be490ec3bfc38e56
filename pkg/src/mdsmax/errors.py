"""Exception types shared across the package."""


class InputError(ValueError):
    """Raised for invalid arguments, refused budgets and malformed configs."""


class PreconditionError(ValueError):
    """Raised when a mathematical precondition of a bound does not hold."""
