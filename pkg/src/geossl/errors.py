"""Exception types shared across the package.

The CLI maps ConfigurationError/ValidationError/ManifestParseError to exit
code 1 (bad usage or bad config) and NumericError plus unexpected runtime
failures to exit code 2.
"""


class GeoSSLError(Exception):
    """Base class for all package errors."""


class ConfigurationError(GeoSSLError):
    """Inconsistent or out-of-range configuration values."""


class ValidationError(GeoSSLError):
    """Data violates a documented invariant."""


class ManifestParseError(GeoSSLError):
    """A manifest file is structurally malformed (names the line number)."""


class NumericError(GeoSSLError):
    """Non-finite values appeared where finite math was required."""
