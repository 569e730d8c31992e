"""Exception hierarchy shared by every module."""


class QnbmError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(QnbmError):
    """Invalid configuration or calendar misalignment."""


class ParameterError(QnbmError, ValueError):
    """An argument lies outside its valid domain."""


class ShapeError(QnbmError, ValueError):
    """Array dimensions do not conform."""


class DataError(QnbmError):
    """Input data is malformed (gaps, duplicates, NaNs, ...)."""


class SchemaError(DataError):
    """CSV header does not match the declared schema."""


class NumericError(QnbmError, ArithmeticError):
    """Training diverged or produced non-finite values."""


class ContractError(QnbmError, RuntimeError):
    """An API precondition was violated (e.g. a stale activation cache)."""


class CheckpointError(QnbmError):
    """Base class for checkpoint problems."""


class IntegrityError(CheckpointError):
    """Checkpoint bytes are truncated or corrupted."""


class IncompatibleCheckpointError(CheckpointError):
    """Checkpoint was written by an unsupported format version."""
