"""Exception types shared across the library."""


class ClusterNSError(Exception):
    """Base class for all library errors."""


class NormalizationError(ClusterNSError):
    """A vector with zero or non-finite norm cannot be normalized."""


class ShapeError(ClusterNSError):
    """Array dimensions are inconsistent with each other or with the contract."""


class BatchTooSmallError(ClusterNSError):
    """A batch of fewer than two samples admits no in-batch negative."""


class ConfigError(ClusterNSError):
    """Invalid or missing configuration value.

    ``field`` carries the dotted path of the offending entry when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class InsufficientSamplesError(ClusterNSError):
    """Fewer samples than centroids requested at initialization."""


class InsufficientClustersError(ClusterNSError):
    """Hard-negative selection needs at least two centroids."""


class DivergenceError(ClusterNSError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class DegenerateRankError(ClusterNSError):
    """Rank correlation is undefined for constant score lists."""


class EmptyInputError(ClusterNSError):
    """An operation received no data to work on."""


class ParseError(ClusterNSError):
    """A data file could not be parsed.

    ``line`` is the 1-based line number when applicable.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GenerationError(ClusterNSError):
    """The synthetic data generator could not satisfy its constraints."""
