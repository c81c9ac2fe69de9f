"""Exception types shared across the package."""


class RydchiError(Exception):
    """Base class for package errors."""


class ConfigError(RydchiError):
    """Invalid or unparsable run configuration."""


class DimensionCapError(RydchiError):
    """A requested register or doubled space exceeds the dimension cap."""


class SchemaError(RydchiError):
    """A serialized document has an unsupported schema version or layout."""


class NumericalAbortError(RydchiError):
    """Propagation produced non-finite amplitudes or an inconsistent jump."""
