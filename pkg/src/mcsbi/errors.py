"""Exception hierarchy shared across modules."""


class McsbiError(Exception):
    """Base class for all errors raised by this package."""


class ModelSyntaxError(McsbiError):
    """Malformed model file; carries 1-based line and column."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)


class PropensityError(McsbiError):
    """A propensity evaluated to a negative or non-finite value."""


class PropertySyntaxError(McsbiError):
    """Malformed or unsupported property formula."""


class RegionLimitError(McsbiError):
    """Region compilation produced more polytopes than the configured limit."""


class IntegrationError(McsbiError):
    """Moment ODE integration failed (non-finite values or step underflow)."""


class StiffnessError(IntegrationError):
    """Adaptive step size fell below the floor; the system is likely stiff."""


class NumericAccuracyError(McsbiError):
    """A probability left [0, 1] by more than the allowed tolerance."""


class StateSpaceError(McsbiError):
    """Explicit state-space enumeration exceeded its cap."""
