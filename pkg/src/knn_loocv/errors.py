"""Exception hierarchy shared by all modules."""


class KnnLoocvError(Exception):
    """Base class for errors raised by this package."""


class ParseError(KnnLoocvError, ValueError):
    """Input file could not be parsed into a dataset."""


class ValidationError(KnnLoocvError, ValueError):
    """Arguments or data violate a documented precondition."""


class ResourceError(KnnLoocvError, RuntimeError):
    """A configured resource cap (time, memory) was exceeded."""


class ConvergenceError(KnnLoocvError, RuntimeError):
    """An iterative method hit its iteration cap.

    The last residual is kept on ``residual``.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual
