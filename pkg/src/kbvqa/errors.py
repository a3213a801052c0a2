"""Exception types shared across the package."""


class KbvqaError(Exception):
    """Base class for every error raised by this package."""


class InvalidBudgetError(KbvqaError, ValueError):
    """Token budget too small to hold the required marker tokens."""


class BackendError(KbvqaError, RuntimeError):
    """Encoder backend unreachable or failing; usually transient, retry."""


class ContractViolationError(KbvqaError, RuntimeError):
    """A backend response broke its declared shape or id contract."""


class DegenerateVectorError(KbvqaError, ValueError):
    """Operation undefined for zero-norm vectors."""


class DataError(KbvqaError, ValueError):
    """Input data failed validation.

    ``offending`` carries the ids or line numbers that triggered the
    failure, so callers can report them all at once.
    """

    def __init__(self, message, offending=None):
        super().__init__(message)
        self.offending = list(offending) if offending is not None else []


class FormatError(KbvqaError, ValueError):
    """A persisted file has the wrong version or encoder profile."""


class PreconditionError(KbvqaError, ValueError):
    """An operation was called before its inputs were prepared."""


class ConfigError(KbvqaError, ValueError):
    """Invalid or inconsistent configuration."""


class MissingInputError(KbvqaError, FileNotFoundError):
    """A required input file or artifact does not exist."""


class FeatureKindError(KbvqaError, ValueError):
    """Visual feature kind not applicable to the requested operation."""
