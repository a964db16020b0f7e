"""Exception hierarchy shared by all csgd modules."""


class CsgdError(Exception):
    """Base class for every error raised by this package."""


# topology
class GraphError(CsgdError, ValueError):
    pass


class IndexOutOfRangeError(GraphError):
    pass


class SelfLoopError(GraphError):
    pass


class DuplicateEdgeError(GraphError):
    pass


class NotConnectedError(GraphError):
    pass


class EpsOutOfRangeError(CsgdError, ValueError):
    pass


class NotSymmetricError(CsgdError, ValueError):
    pass


class NoConvergenceError(CsgdError, RuntimeError):
    pass


class DimensionMismatchError(CsgdError, ValueError):
    pass


# straggler
class SupportTooLargeError(CsgdError):
    """Exact enumeration is infeasible; use Monte Carlo moments instead."""


# losses / data
class EmptyBatchError(CsgdError, ValueError):
    pass


class UnavailableError(CsgdError):
    """A closed-form quantity does not exist for this loss/data combination."""


class BadMagicError(CsgdError, ValueError):
    pass


class TruncatedFileError(CsgdError, ValueError):
    pass


class ClassCountMismatchError(CsgdError, ValueError):
    pass


# estimators / engine
class MissingWorkerError(CsgdError, ValueError):
    pass


class PriorMismatchError(CsgdError, ValueError):
    pass


class DegenerateStragglersError(CsgdError):
    """Raised when s2 == 0; ``report`` holds the tie report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(CsgdError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message
