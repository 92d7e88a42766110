class MfocError(Exception):
    """Base class for all errors raised by this package."""


class DivergedRolloutError(MfocError):
    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"rollout diverged at step {step}")


class SpecificationError(MfocError):
    """A problem definition is malformed (e.g. switched system without catch-all)."""


class ConfigurationError(MfocError):
    """Inconsistent numerical configuration (grid alignment, bounds, sizes)."""


class EstimationError(MfocError):
    """The gradient estimator could not produce an estimate."""


class ExpressionError(MfocError):
    """Syntax or name error in a dynamics/cost expression."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class ExpressionDomainError(MfocError):
    """Evaluation left the real domain of a function, e.g. log(-1)."""


class ProblemFileError(MfocError):
    """A problem file is missing fields or violates an invariant."""
