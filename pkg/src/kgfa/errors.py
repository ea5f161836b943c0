"""Shared exception types."""


class ResourceBudgetError(RuntimeError):
    """Raised when an evaluation would exceed its configured work budget.

    Carries the estimated and allowed cost so callers (and the CLI,
    which maps this to exit code 3) can report actionable guidance.
    """

    def __init__(self, message: str, estimated: int = 0, allowed: int = 0):
        super().__init__(message)
        self.estimated = estimated
        self.allowed = allowed
