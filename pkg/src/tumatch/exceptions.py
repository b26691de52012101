"""Exception hierarchy shared by all tumatch modules."""


class TUMatchError(Exception):
    """Base class for all errors raised by tumatch."""


class DimensionError(TUMatchError, ValueError):
    pass


class DomainError(TUMatchError, ValueError):
    pass


class ConsistencyError(TUMatchError, ValueError):
    pass


class SizeError(TUMatchError, ValueError):
    pass


class RankError(TUMatchError, ValueError):
    pass


class ConditioningError(TUMatchError, ValueError):
    pass


class SummaryError(TUMatchError, ValueError):
    pass


class SolverError(TUMatchError, RuntimeError):
    pass


class ZeroCellError(TUMatchError, ValueError):
    """A matching cell needed by an estimator is empty.

    ``cell`` uses 1-based type indices with 0 standing for "single", so
    ``(2, 0)`` is the single men of type 2.
    """

    def __init__(self, cell, message=None):
        self.cell = tuple(int(c) for c in cell)
        if message is None:
            message = f"zero or negative mass in cell {self.cell}"
        super().__init__(message)


class ConvergenceError(TUMatchError, RuntimeError):
    def __init__(self, message, residual, iterations):
        self.residual = float(residual)
        self.iterations = int(iterations)
        super().__init__(f"{message} (residual={self.residual:.3e} after {self.iterations} iterations)")
