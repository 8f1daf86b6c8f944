"""Exception types shared across the package."""


class SchemaError(ValueError):
    """A schema declaration or a dataset/schema mismatch is invalid."""


class CsvParseError(ValueError):
    """A CSV cell could not be parsed; message carries the row number."""


class ConfigError(ValueError):
    """An invalid configuration document or parameter combination."""


class FingerprintMismatchError(RuntimeError):
    """Chained artifacts disagree on a content fingerprint."""


class TrainingError(RuntimeError):
    """Training aborted (for example NaN loss or NaN gradients)."""


class UndefinedAucError(ValueError):
    """AUC requested on a single-class label vector."""
