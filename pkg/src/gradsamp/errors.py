"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration problems -> 1,
training divergence -> 2, file/format problems -> 3.
"""


class GradsampError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(GradsampError):
    """Invalid configuration: unknown key, bad value, unresolvable path."""


class DivergenceError(GradsampError):
    """Training produced a non-finite gradient or loss."""


class ArtifactError(GradsampError):
    """A run artifact (CSV, IDX file, error dump) is missing or malformed."""
