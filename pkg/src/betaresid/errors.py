"""Exception hierarchy shared by every module.

The command-line layer maps each family to an exit code, so library code
raises the most specific class it can.
"""


class BetaResidError(Exception):
    """Base class for all package errors."""


class DomainError(BetaResidError, ValueError):
    """An argument lies outside the domain of a mathematical function."""


class InputError(BetaResidError, ValueError):
    """User-supplied data or configuration violates a precondition."""


class UndefinedStatisticError(BetaResidError, ValueError):
    """A summary statistic is undefined for the given sample."""


class NumericalError(BetaResidError, ArithmeticError):
    """A numerical procedure broke down (singular matrix, non-finite value)."""


class ConvergenceError(BetaResidError, RuntimeError):
    """An iterative procedure failed to converge within its budget."""


class StudyError(ConvergenceError):
    """A Monte Carlo study exceeded its failed-replicate allowance."""
