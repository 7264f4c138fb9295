"""Exception types shared across the package."""


class FFAError(Exception):
    """Base class for all package errors."""

    category = "internal"


class ConfigError(FFAError):
    """Invalid or inconsistent experiment configuration."""

    category = "config"


class DataError(FFAError):
    """Dataset ingestion or sample-preparation failure."""

    category = "data"


class CheckpointError(FFAError):
    """Malformed, truncated or mismatched checkpoint file."""

    category = "checkpoint"


class DivergenceError(FFAError):
    """Training produced non-finite weights."""

    category = "diverged"
