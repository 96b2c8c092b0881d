"""Shared exception types. Every error raised by this package derives from LuminaError."""


class LuminaError(Exception):
    pass


class ShapeError(LuminaError):
    """Extent mismatch: incompatible operands, non-divisible pooling/patching, bad gain length."""


class NumericError(LuminaError):
    """NaN/Inf where finite values are required."""


class UsageError(LuminaError):
    """API misuse: backward on a non-scalar, dt <= 0, t outside [0,1], empty sequence."""


class ConfigError(LuminaError):
    """Invalid configuration value or unknown configuration key."""


class DataError(LuminaError):
    """Invalid data content, e.g. out-of-vocabulary token ids."""


class CheckpointError(LuminaError):
    """Unreadable checkpoint or tensor blob: bad magic, bad version, truncated file."""


class NanLossError(LuminaError):
    """Training loss became non-finite. Carries the seeds needed to replay the batch."""

    def __init__(self, message, *, stage=None, step=None, batch_seed=None):
        super().__init__(message)
        self.stage = stage
        self.step = step
        self.batch_seed = batch_seed
