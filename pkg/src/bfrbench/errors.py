"""Exception types shared across the toolkit."""


class BfrBenchError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(BfrBenchError):
    """Shape/axis mismatch between arrays or tensors."""


class ContractError(BfrBenchError):
    """An operation was called outside its contract (e.g. non-scalar loss)."""


class ParameterError(BfrBenchError):
    """A parameter value is outside its valid range."""


class ConfigError(BfrBenchError):
    """A model configuration violates an invariant."""


class FormatError(BfrBenchError):
    """A file does not conform to its declared format."""


class TrainingError(BfrBenchError):
    """Training aborted (e.g. non-finite loss)."""


class PairingError(BfrBenchError):
    """Paired inputs (landmarks, embeddings) do not line up."""


class NumericError(BfrBenchError):
    """A numeric procedure failed (singular matrix, non-finite result)."""


class FitError(BfrBenchError):
    """Model fitting failed (e.g. too few usable patches)."""
