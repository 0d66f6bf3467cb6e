class TobitError(Exception):
    """Base class for every error raised by the package."""


class FamilyParameterError(TobitError, ValueError):
    """Invalid extra parameter, dispersion or argument outside a distribution's domain."""


class DataContractError(TobitError, ValueError):
    """Dataset or CSV input violating the tobit data contract."""

    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(TobitError):
    """Non-finite evaluation where a finite value is required."""


class InformationMatrixError(NumericalError):
    """Observed information that is singular or not positive definite."""

    def __init__(self, eigenvalue: float):
        self.eigenvalue = eigenvalue
        super().__init__(
            f"observed information is not positive definite (smallest eigenvalue {eigenvalue:.6g})"
        )


class ConvergenceError(NumericalError):
    """An optimization that did not reach the gradient tolerance."""

    def __init__(self, message: str, optim=None):
        self.optim = optim
        super().__init__(message)


class FailureBudgetError(NumericalError):
    """Too many failed replications in a simulation loop."""

    def __init__(self, failures: int, allowed: int, context: str = ""):
        self.failures = failures
        self.allowed = allowed
        super().__init__(
            f"{failures} failed replications exceed the budget of {allowed}"
            + (f" ({context})" if context else "")
        )


class RestrictionError(TobitError, ValueError):
    """Hypothesis restriction naming an unknown or non-estimable parameter."""
