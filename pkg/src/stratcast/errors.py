"""Exception types shared across the package.

Everything user-input related derives from ValueError so callers can catch
broadly; the CLI maps these to exit code 2.
"""


class StratcastError(ValueError):
    """Base class for input/configuration problems."""


class ResolutionError(StratcastError):
    """Grid resolution does not evenly divide the latitude/longitude axes."""


class SchemaError(StratcastError):
    """Malformed or out-of-contract input data (GeoJSON, CSV, manifest)."""


class ConflictError(StratcastError):
    """Duplicate keys where uniqueness is required."""


class CompletenessError(StratcastError):
    """A required cross-reference is missing (e.g. territory without subregion)."""


class FingerprintError(StratcastError):
    """Cached or serialized artifact does not match the grid/catalog in use."""


class BundleFormatError(StratcastError):
    """Bundle directory fails structural validation (sizes, dtypes, axes)."""
