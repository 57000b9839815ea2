"""Exception hierarchy shared by all mrct modules."""


class MrctError(Exception):
    """Base class for every error raised by the package."""


class DimensionError(MrctError, ValueError):
    pass


class DomainError(MrctError, ValueError):
    pass


class ParseError(MrctError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(MrctError, ArithmeticError):
    pass


class DegenerateSubsetError(NumericalError):
    """The trimmed covariance of a subset has no variation left."""


class UnderdeterminedCurveError(NumericalError):
    def __init__(self, curve_id, n_obs, n_basis):
        super().__init__(
            f"curve {curve_id!r} has {n_obs} observations but {n_basis} basis "
            "functions were requested"
        )
        self.curve_id = curve_id


class ConvergenceError(NumericalError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class EstimationError(NumericalError):
    """No usable chain survived the multi-start search."""
