"""Exception types shared across the toolkit."""


class DsrError(Exception):
    """Base class for all toolkit errors."""


class IoError(DsrError):
    """A file could not be read or written."""


class FormatError(DsrError):
    """A file exists but its contents do not parse (bad magic, header, size)."""


class DataError(DsrError):
    """Decoded data violates an invariant (e.g. non-finite depth values)."""


class DimensionError(DsrError):
    """Image or array dimensions are invalid or inconsistent."""


class DegenerateError(DsrError):
    """An input is degenerate for the requested computation."""


class ConfigError(DsrError):
    """A configuration value is out of its valid range."""


class SolverError(DsrError):
    """An iterative solver failed to reach its tolerance."""
