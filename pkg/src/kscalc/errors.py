"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input data violates a structural precondition or a hard audit."""

    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail


class FitError(RuntimeError):
    """A local seminorm fit cannot be carried out; names the defect."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConvergenceError(RuntimeError):
    """An iteration ran out of its pass budget; carries the last iterate."""

    def __init__(self, message, last=None, residual=None):
        super().__init__(message)
        self.last = last
        self.residual = residual


class AuditError(RuntimeError):
    """A runtime self-check (energy monotonicity, uniqueness audit) failed."""
