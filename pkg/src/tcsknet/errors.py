"""Exception types shared across the toolkit."""


class DimensionError(ValueError):
    """Shape/extent mismatch between tensors or against an op's contract."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration value."""


class UninitializedStatisticsError(RuntimeError):
    """Eval-mode batchnorm requested before any running statistics exist."""


class AudioFormatError(ValueError):
    """WAV file is not mono PCM 16/24-bit, or is otherwise unreadable."""


class CheckpointError(RuntimeError):
    """Bad magic, unsupported version, or truncated binary artifact."""


class ManifestError(ValueError):
    """Malformed dataset manifest; message carries the offending row number."""


class SearchError(RuntimeError):
    """Hyperparameter search could not produce a usable trial."""


class OptimizerError(RuntimeError):
    """Optimizer step aborted (e.g. non-finite gradient); names the parameter."""


class TrainingAborted(RuntimeError):
    """Training loop stopped at a non-finite loss; message carries epoch/batch."""
