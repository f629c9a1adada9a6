"""Matrix-order fractional calculus: Riemann-Liouville operators whose order is a matrix."""
from .errors import (
    DimensionMismatch,
    EigenvalueOutOfDomain,
    FunctionEvalError,
    InputError,
    MoFracError,
    NonDiagonalizable,
    NonPositiveBase,
    NonSquare,
    NotCommuting,
    NumericalFailure,
    PoleAtEigenvalue,
    PreconditionViolated,
    SingularCoefficient,
    StencilOutOfDomain,
    ToleranceUnmet,
)
from .exprfn import MatrixFunction
from .fracops import OperatorConfig, d_m, d_m_many, j_m, j_m_many
from .gammafn import mat_beta, mat_gamma, mat_gamma_inv
from .matcore import EigenSystem, eig_decompose, holomorphic_apply
from .quad import QuadSpec

__version__ = "0.1.0"

__all__ = [
    "DimensionMismatch",
    "EigenSystem",
    "EigenvalueOutOfDomain",
    "FunctionEvalError",
    "InputError",
    "MatrixFunction",
    "MoFracError",
    "NonDiagonalizable",
    "NonPositiveBase",
    "NonSquare",
    "NotCommuting",
    "NumericalFailure",
    "OperatorConfig",
    "PoleAtEigenvalue",
    "PreconditionViolated",
    "QuadSpec",
    "SingularCoefficient",
    "StencilOutOfDomain",
    "ToleranceUnmet",
    "d_m",
    "d_m_many",
    "eig_decompose",
    "holomorphic_apply",
    "j_m",
    "j_m_many",
    "mat_beta",
    "mat_gamma",
    "mat_gamma_inv",
]
