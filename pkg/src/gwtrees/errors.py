"""Exception types shared across the package."""


class MalformedEncoding(ValueError):
    """A preorder bitstring violates the prefix rule or is truncated.

    ``index`` is the position of the first violation; for a string that
    ends with pending nodes it equals ``len(s)``.
    """

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"malformed encoding at index {index}")


class InvalidSize(ValueError):
    """Requested tree size is not an odd positive integer."""


class BudgetExceeded(ValueError):
    """Enumeration requested beyond the exact-arithmetic budget."""


class UnsupportedThreshold(ValueError):
    """An analysis is only defined for specific threshold values."""


class InsufficientSamples(ValueError):
    """Too few samples for the requested statistical test."""


class ImproperPGF(ValueError):
    """A rational generating function is not a probability distribution."""


class RejectionBudgetExceeded(RuntimeError):
    """Rejection sampling exhausted its retry budget."""
