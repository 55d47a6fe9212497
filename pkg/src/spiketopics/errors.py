"""Exception types shared across the package."""


class SpikeTopicsError(Exception):
    """Base class for all library errors."""


class CorpusFormatError(SpikeTopicsError, ValueError):
    """Malformed bag-of-words input. Carries the offending line number."""

    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ConsistencyError(SpikeTopicsError, ValueError):
    """Declared metadata disagrees with the actual data."""


class ConfigError(SpikeTopicsError, ValueError):
    """Invalid run configuration (bad fraction, missing field, ...)."""


class DomainError(SpikeTopicsError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class InvariantError(SpikeTopicsError, RuntimeError):
    """An internal bookkeeping invariant was violated (counts, fan-in, ...)."""


class TrainingDiverged(SpikeTopicsError, RuntimeError):
    """Weights left the finite range during training or integration."""

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class StoreError(SpikeTopicsError, IOError):
    """External document-weight store failed. Carries the document id."""

    def __init__(self, message, doc_id=None):
        self.doc_id = doc_id
        if doc_id is not None:
            message = f"doc {doc_id}: {message}"
        super().__init__(message)
