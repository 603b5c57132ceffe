"""Semantic exception hierarchy shared across the package."""


class ReconcileError(Exception):
    """Base class for all library errors."""


class AlignmentError(ReconcileError, ValueError):
    """Vectors that must share a length (or an id set) do not."""


class ParameterError(ReconcileError, ValueError):
    """A numeric parameter is outside its documented domain."""


class EmptyGroupError(ReconcileError):
    """An operation conditioned on a group received an all-zero mask."""


class DegenerateInputError(ReconcileError):
    """Input is structurally valid but makes the requested statistic undefined."""


class GenerationError(ReconcileError):
    """A synthetic generator exhausted its retry budget."""


class OverlapError(ReconcileError):
    """A causal region lacks treated or control units."""


class DataFormatError(ReconcileError, ValueError):
    """A file failed schema validation; message carries row/column context."""
