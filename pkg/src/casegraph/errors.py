"""Exception types shared across the package."""


class CasegraphError(Exception):
    """Base class for every error raised by this package."""


class ParseError(CasegraphError):
    """An input file could not be parsed; the message names the offending line."""


class ValidationError(CasegraphError):
    """Parsed data violates a content contract (duplicates, self-loops, ...)."""


class UnknownIdentifierError(CasegraphError):
    """A concept or relation identifier is not known to the receiving model."""


class ConfigError(CasegraphError):
    """A component was configured with unusable inputs (e.g. empty entity set)."""


class TrainingError(CasegraphError):
    """Training cannot proceed (e.g. no positive relation labels)."""


class ConsistencyError(CasegraphError):
    """Cross-structure consistency is broken (e.g. edge endpoint without a node)."""


class FormatError(CasegraphError):
    """A persisted container has the wrong format tag or version."""


class UsageError(CasegraphError):
    """An operation was called with out-of-range or incompatible arguments."""
