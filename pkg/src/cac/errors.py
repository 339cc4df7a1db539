"""Exception types shared across the package."""


class CacError(Exception):
    """Base class for package-specific errors."""


class EmptySpaceError(CacError):
    """An intersection of search-space boxes is empty."""


class SpaceViolationError(CacError):
    """A point that must lie inside the current search space does not."""


class BudgetExhaustedError(CacError):
    """A query was requested but the ledger has no budget left."""


class TransportError(CacError):
    """A remote oracle could not be reached after the configured retries."""


class TrainingDivergedError(CacError):
    """Training produced a non-finite loss or non-finite weights."""


class WeightFormatError(CacError):
    """A serialized weight payload is malformed or inconsistent."""


class UnsupportedVersionError(WeightFormatError):
    """A serialized weight payload declares an unknown format version."""
