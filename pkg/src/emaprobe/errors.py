"""Exception hierarchy shared across the engine.

Two broad families matter to callers: validation problems (bad arguments,
malformed files, contract violations) and I/O problems (missing or
unwritable data). The CLI maps them to exit codes 1 and 2 respectively.
"""


class EngineError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(EngineError):
    """Invalid arguments, configuration, or contract violations."""


class FormatError(ValidationError):
    """Malformed APT1 or EST Track bytes (bad magic, truncation, bad header)."""


class PairingError(ValidationError):
    """Feature/EMA streams that cannot be paired (rates or lengths disagree)."""


class MappingError(ValidationError):
    """Channel mapping that does not cover the canonical layout."""


class FitError(ValidationError):
    """Degenerate inputs to normalizer or probe fitting."""


class UndefinedCorrelationError(ValidationError):
    """Pearson correlation requested against a constant vector."""


class DataIOError(EngineError):
    """Missing input files or failed writes."""
