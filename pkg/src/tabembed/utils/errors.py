"""Exception hierarchy for tabembed."""

from typing import Optional


class TabEmbedError(Exception):
    """Base class for every error raised by tabembed."""


class DimensionError(TabEmbedError, ValueError):
    """Shape or length mismatch between operands."""


class ParameterError(TabEmbedError, ValueError):
    """Invalid numeric parameter passed to an operation."""


class ConfigurationError(TabEmbedError, ValueError):
    """Invalid configuration, optionally naming the offending field or flag."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field is not None and field not in message:
            message = f"{field}: {message}"
        super().__init__(message)


class DomainError(TabEmbedError, ValueError):
    """Input outside the domain of a function."""


class OutOfVocabularyError(TabEmbedError, IndexError):
    """Categorical index outside the field vocabulary."""


class SchemaError(TabEmbedError, ValueError):
    """Data does not match the feature schema."""


class DataError(TabEmbedError, ValueError):
    """Malformed or insufficient data."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(message)


class ContractError(TabEmbedError, RuntimeError):
    """An API precondition was violated."""


class UndefinedMetricError(TabEmbedError, ValueError):
    """Metric is undefined for the given inputs."""


class StaleCacheError(TabEmbedError, RuntimeError):
    """Precomputed embeddings no longer match the model parameters."""
