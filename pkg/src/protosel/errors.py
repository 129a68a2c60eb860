"""Exception types raised across the package."""


class ProtoselError(Exception):
    """Base class for every error raised by protosel."""


class DatasetFormatError(ProtoselError, ValueError):
    """A data file could not be parsed."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class SplitError(ProtoselError, ValueError):
    pass


class MemoryBudgetError(ProtoselError, MemoryError):
    """Refusal to materialize a dissimilarity matrix larger than the budget."""


class SingularCovarianceError(ProtoselError, ValueError):
    pass


class StaleAcceleratorError(ProtoselError, ValueError):
    """A pivot table was built over a different dataset revision."""


class DegenerateSampleError(ProtoselError, ValueError):
    pass


class ClusteringError(ProtoselError, RuntimeError):
    pass
