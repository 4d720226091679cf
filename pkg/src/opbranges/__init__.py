"""Numerical toolkit for de Branges spaces with operator-valued kernels."""

__version__ = "0.1.0"

from opbranges.errors import (
    DomainError,
    IntegrationError,
    OpBrangesError,
    PreconditionError,
    SingularityError,
    ValidationFailure,
)
from opbranges.linops import DEFAULT_TOLERANCES, Tolerances

__all__ = [
    "__version__",
    "DEFAULT_TOLERANCES",
    "Tolerances",
    "OpBrangesError",
    "DomainError",
    "SingularityError",
    "PreconditionError",
    "ValidationFailure",
    "IntegrationError",
]
