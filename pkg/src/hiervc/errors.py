"""Exception hierarchy shared by every subsystem."""


class HiervcError(Exception):
    """Base class; ``kind`` is the short tag printed by the CLI."""

    kind = "error"


class ConfigurationError(HiervcError, ValueError):
    kind = "config"


class UsageError(HiervcError, RuntimeError):
    kind = "usage"


class NumericError(HiervcError, FloatingPointError):
    kind = "numeric"


class InputError(HiervcError, ValueError):
    kind = "input"


class FormatError(HiervcError, ValueError):
    """Malformed container or checkpoint bytes."""

    kind = "format"


class TruncationError(FormatError):
    """A payload ended before the declared number of symbols was decoded."""

    kind = "truncated"


class CorruptChunkError(FormatError):
    kind = "corrupt"


class SymbolRangeError(HiervcError, ValueError):
    kind = "symbol-range"


class DivergenceError(HiervcError, RuntimeError):
    kind = "diverged"
