"""Exception types shared across the toolkit."""


class ToxelError(Exception):
    """Base class for all toxel4d errors."""


class GridFormatError(ToxelError):
    """Raised when a .tox4 stream is malformed (bad magic, dtype, payload size...)."""


class PlacementError(ToxelError):
    """Raised when cavity placement cannot satisfy the boundary/spacing rules."""

    def __init__(self, attempts: int, message: str | None = None):
        self.attempts = attempts
        super().__init__(message or f"cavity placement failed after {attempts} attempts")


class CellBudgetError(ToxelError):
    """Raised when a grid induces more cubical cells than the engine is allowed to reduce."""

    def __init__(self, required: int, budget: int):
        self.required = required
        self.budget = budget
        super().__init__(
            f"cubical complex needs {required} cells, exceeding the cell budget of {budget}"
        )


class LabelRangeError(ToxelError):
    """Raised when a Betti label does not fit the classifier's output heads."""
