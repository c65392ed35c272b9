"""Fully-implicit two-phase hydrogen migration with a semi-smooth Newton-min solver."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DomainError,
    EvaluationFailure,
    NonConvergence,
    NumericalFailure,
    ParseError,
    SingularLinearSystem,
    StepFailure,
    ValidationError,
)

__all__ = [
    "__version__",
    "ConfigError",
    "DomainError",
    "EvaluationFailure",
    "NonConvergence",
    "NumericalFailure",
    "ParseError",
    "SingularLinearSystem",
    "StepFailure",
    "ValidationError",
]
