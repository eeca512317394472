"""Exception hierarchy.

Validation problems (bad input, unidentified designs) derive from
:class:`ValidationError`; failures of a numerical routine derive from
:class:`NumericalError`. The CLI maps the two families to different exit codes.
"""


class FdAuditError(Exception):
    """Base class for all package errors."""


class ValidationError(FdAuditError, ValueError):
    """Input data or configuration violates a documented precondition."""


class UnbalancedPanelError(ValidationError):
    def __init__(self, units, message=None):
        self.units = list(units)
        shown = ", ".join(str(u) for u in self.units[:20])
        more = "" if len(self.units) <= 20 else f" (+{len(self.units) - 20} more)"
        super().__init__(message or f"unbalanced panel; offending units: {shown}{more}")


class ZeroVarianceError(ValidationError):
    """A regressor the estimator needs has no variation."""


class IdentificationError(ValidationError):
    """The target parameter is not identified on this sample."""


class NumericalError(FdAuditError, ArithmeticError):
    """A numerical routine failed."""


class RankDeficientError(NumericalError):
    def __init__(self, columns, message=None):
        self.columns = list(columns)
        super().__init__(message or f"design matrix is rank deficient; collinear columns: {self.columns}")


class ConvergenceError(NumericalError):
    def __init__(self, message, gap=None):
        self.gap = gap
        super().__init__(message)


class DivergenceError(NumericalError):
    pass
