"""Exception hierarchy shared by the core library and the CLI."""
from typing import Optional


class HierarchyEmbedError(Exception):
    """Base class for every error raised by hierarchy-embed-tool."""


class TaxonomyError(HierarchyEmbedError):
    """Invalid hierarchy, unknown node or degenerate hierarchy height."""


class TaxonomyParseError(TaxonomyError):
    """Malformed hierarchy or class list document."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class EmbeddingError(HierarchyEmbedError):
    """Similarities that cannot be realized, or inconsistent matrix shapes."""


class ConvergenceError(EmbeddingError):
    """The eigen solver did not converge within its sweep budget."""


class MapperError(HierarchyEmbedError):
    """Invalid mapper model, batch or configuration."""


class TrainingError(MapperError):
    """Training diverged (the loss became non-finite)."""


class EvaluationError(HierarchyEmbedError):
    """Invalid retrieval or classification evaluation input."""


class FileFormatError(HierarchyEmbedError):
    """Malformed or unreadable dataset, embedding, model or log file."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ConfigError(FileFormatError):
    """Invalid run-config file, option value or missing input path."""
