"""Exception taxonomy.

ConfigError maps to CLI exit code 2, everything else derived from
OodBenchError (and plain OSError from file handling) maps to exit code 3.
"""


class OodBenchError(Exception):
    """Base class for all library errors."""


class FormatError(OodBenchError):
    """File is not in a recognized embedding/logit container format."""


class TruncationError(FormatError):
    """Header arithmetic disagrees with the actual payload size."""


class DataError(OodBenchError):
    """Values violate a data invariant (NaN/Inf, zero rows, empty sets...)."""


class ManifestError(OodBenchError):
    """Benchmark manifest is inconsistent or references bad files."""


class ConfigError(OodBenchError):
    """Caller asked for something the inputs cannot satisfy."""
