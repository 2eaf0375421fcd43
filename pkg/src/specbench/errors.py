"""Typed exceptions shared across the engine."""


class SpecbenchError(Exception):
    """Base class for all engine errors."""


class ConfigError(SpecbenchError):
    """Invalid manifest, CLI arguments, or run configuration."""


class DataValidationError(SpecbenchError):
    """Dataset ingestion or invariant failure (carries coordinates when known)."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class ParameterError(SpecbenchError):
    """Operator or model called with out-of-domain parameters."""


class DegenerateInputError(SpecbenchError):
    """Input that makes an operator mathematically undefined (zero variance etc.)."""


class PipelineError(SpecbenchError):
    """Failure inside a preprocessing pipeline; records the failing step index."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class BridgeError(SpecbenchError):
    """External-model protocol failure: spawn, handshake, timeout, or bad reply."""


class SearchError(SpecbenchError):
    """Search could not produce a result (all trials failed, empty space...)."""
