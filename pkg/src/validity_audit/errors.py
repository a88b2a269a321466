"""Exception types shared across the package."""


class AuditError(Exception):
    """Base class for all errors raised by validity_audit."""


class ParseError(AuditError, ValueError):
    """A data file could not be parsed.

    ``line`` is the 1-based line number of the offending row, when known.
    """

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ValidationError(AuditError, ValueError):
    """Input data violates a documented invariant (e.g. label out of range)."""


class SchemaError(AuditError, KeyError):
    """A column mapping references a column that does not exist."""

    def __str__(self):
        return str(self.args[0]) if self.args else "schema error"


class DomainError(AuditError, ValueError):
    """A numeric argument lies outside the domain of the function."""


class PreconditionError(AuditError, ValueError):
    """A documented precondition of an operation does not hold."""


class TailFitError(AuditError, ValueError):
    """A power-law tail cannot be fitted to the given degrees."""


class RankDeficientError(AuditError, ValueError):
    """A factor matrix does not have full column rank."""


class ConvergenceError(AuditError, RuntimeError):
    """An iterative solver failed to reach its tolerance."""


class WorldRejected(AuditError):
    """A generated world violates its fit/rank/box tolerances.

    The rejected candidate and its residuals are kept for diagnostics.
    """

    def __init__(self, message, matrix=None, fit_residual=None, rank_residual=None):
        super().__init__(message)
        self.matrix = matrix
        self.fit_residual = fit_residual
        self.rank_residual = rank_residual
