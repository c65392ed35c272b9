"""Exception hierarchy shared by the solver, the time loop and the CLI."""


class DomainError(ValueError):
    """A constitutive law was evaluated outside its domain."""

    def __init__(self, message, cell=None):
        if cell is not None:
            message = f"{message} (cell {cell})"
        super().__init__(message)
        self.cell = cell


class NumericalFailure(RuntimeError):
    """Base class for failures of the nonlinear or linear solvers.

    ``report`` holds the partial :class:`~ncpflow.ncp.NewtonReport` when
    one is available.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NonConvergence(NumericalFailure):
    pass


class SingularLinearSystem(NumericalFailure):
    pass


class EvaluationFailure(NumericalFailure):
    pass


class StepFailure(NumericalFailure):
    """A time step failed after all allowed step halvings."""

    def __init__(self, message, report=None, partial=None):
        super().__init__(message, report)
        self.partial = partial


class ConfigError(ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(ConfigError):
    def __init__(self, key, constraint):
        super().__init__(f"{key}: {constraint}")
        self.key = key
        self.constraint = constraint
