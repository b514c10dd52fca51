"""Exception hierarchy shared across modules.

DomainError covers invalid inputs (bad parameters, infeasible geometry);
NumericError covers failures arising during computation (non-finite
intermediates, singular matrices, non-convergence).  The CLI maps these
to exit codes 2 and 3 respectively.
"""


class HaclrtError(Exception):
    pass


class DomainError(HaclrtError, ValueError):
    pass


class HypothesisError(DomainError):
    """Hypothesis not satisfied (or ill-formed) at the evaluation point."""


class UnsupportedNestingError(DomainError):
    """No exact sampler exists for the requested nesting configuration."""


class SchemeError(DomainError):
    """Finite-difference evaluation point would leave the parameter space."""


class NumericError(HaclrtError, ArithmeticError):
    pass


class SingularSigmaError(NumericError):
    """Information matrix is not positive definite."""


class ConvergenceError(NumericError):
    """All optimizer starts failed to converge."""
