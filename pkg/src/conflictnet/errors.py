"""Exception hierarchy shared across the package."""


class ConflictNetError(Exception):
    """Base class for all package errors."""


class PanelError(ConflictNetError):
    """Raised for problems with input panel data."""


class ParseError(PanelError):
    """A row of an input CSV could not be parsed."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class ValidationError(PanelError):
    """Input records parsed but violate a panel invariant."""


class ModelSpecError(ConflictNetError):
    """A model specification is malformed or not computable on a panel."""


class EstimationError(ConflictNetError):
    """Base class for fitting failures."""


class SeparationError(EstimationError):
    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"complete or quasi-complete separation on column {column!r}")


class SingularHessianError(EstimationError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(
            "singular Hessian; consider removing one of the collinear terms: "
            + ", ".join(self.columns)
        )


class ConvergenceError(EstimationError):
    def __init__(self, message, trace=()):
        self.trace = list(trace)
        super().__init__(message)


class BootstrapError(EstimationError):
    def __init__(self, message, failures=()):
        self.failures = list(failures)
        super().__init__(message)


class MetricError(ConflictNetError):
    """A metric is undefined for the given input (e.g. a single class)."""


class PreconditionError(ConflictNetError):
    """An operation was called with arguments that violate its contract."""
