"""Exception types shared across the package."""


class DglmnetError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(DglmnetError, ValueError):
    """An argument violates an operation's contract."""


class DataError(DglmnetError):
    """A dataset file or stream is malformed or internally inconsistent."""


class NumericalError(DglmnetError):
    """The solver hit a numerical failure it cannot recover from."""


class StalledLineSearchError(NumericalError):
    """Backtracking exhausted its budget without satisfying the acceptance rule."""


class NoConvergenceError(NumericalError):
    """An iterative routine hit its iteration cap before reaching tolerance."""


class ReductionError(DglmnetError):
    """A collective operation failed: missing peer, timeout, or disconnect."""


class ProtocolError(ReductionError):
    """Participants disagree on the shape or framing of a collective."""


class UndefinedMetricError(InvalidInputError):
    """A metric is undefined for the given inputs (e.g. no positive labels)."""
