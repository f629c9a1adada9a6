"""Exception hierarchy shared by every mofrac module."""


class MoFracError(Exception):
    """Base class for all library errors."""


class InputError(MoFracError):
    """Malformed input (bad JSON, wrong shapes, unparsable grid)."""


class DimensionMismatch(InputError):
    pass


class NonSquare(DimensionMismatch):
    pass


class PreconditionViolated(MoFracError):
    """A mathematical precondition of an operation does not hold."""


class NonDiagonalizable(PreconditionViolated):
    pass


class PoleAtEigenvalue(PreconditionViolated):
    def __init__(self, eigenvalue, message=None):
        self.eigenvalue = complex(eigenvalue)
        super().__init__(message or f"function has a pole at eigenvalue {self.eigenvalue}")


class NonPositiveBase(PreconditionViolated):
    pass


class EigenvalueOutOfDomain(PreconditionViolated):
    pass


class NotCommuting(PreconditionViolated):
    pass


class SingularCoefficient(PreconditionViolated):
    pass


class StencilOutOfDomain(PreconditionViolated):
    pass


class NumericalFailure(MoFracError):
    """The computation ran but could not meet its accuracy contract."""


class ToleranceUnmet(NumericalFailure):
    def __init__(self, message, err_estimate=None):
        self.err_estimate = err_estimate
        super().__init__(message)


class FunctionEvalError(PreconditionViolated):
    pass
