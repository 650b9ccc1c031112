"""Exception types shared across the package."""


class DomainError(ValueError):
    """A parameter lies outside its mathematically valid domain."""


class BreakdownError(ArithmeticError):
    """A sequential recursion lost positive definiteness.

    Carries the step index at which the innovation variance (or pivot)
    fell below the floor.
    """

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"numerical breakdown at step {index}")


class NotPositiveDefiniteError(ArithmeticError):
    """Banded Cholesky hit a nonpositive (or non-finite) pivot."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"nonpositive pivot at column {index}")


class FitError(RuntimeError):
    """Coefficient optimization failed; carries the best point found."""

    def __init__(self, message, best_theta=None, best_objective=None):
        super().__init__(message)
        self.best_theta = best_theta
        self.best_objective = best_objective


class DataFormatError(ValueError):
    """Unparseable input data; carries the failing line number."""

    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class DegenerateDataError(ValueError):
    """Input series carries no usable signal (e.g. zero variance)."""
