"""Exception types raised by the toolkit."""


class OpBrangesError(Exception):
    """Base class for all toolkit errors."""


class DomainError(OpBrangesError, ValueError):
    """A point lies outside the domain of a non-entire function."""


class SingularityError(OpBrangesError, ArithmeticError):
    """A matrix that must be inverted is numerically singular."""

    def __init__(self, message, sigma=None, point=None):
        super().__init__(message)
        self.sigma = sigma
        self.point = point


class PreconditionError(OpBrangesError, ValueError):
    """An operation was called with inputs violating its preconditions."""


class ValidationFailure(OpBrangesError):
    """A de Branges pair failed validation.

    ``check`` names the first failing check, ``report`` carries the full
    validation report.
    """

    def __init__(self, check, report=None, detail=""):
        msg = f"validation failed at check '{check}'"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.check = check
        self.report = report


class IntegrationError(SingularityError):
    """The ODE state became non-finite; ``step`` is the failing step index."""

    def __init__(self, message, step=None, r=None):
        super().__init__(message)
        self.step = step
        self.r = r
