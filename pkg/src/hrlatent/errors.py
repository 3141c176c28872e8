"""Exception hierarchy shared by all modules."""


class HRLatentError(Exception):
    """Base class for library errors."""


class InvalidDimensionError(HRLatentError, ValueError):
    pass


class InvalidVariogramError(HRLatentError, ValueError):
    pass


class InvalidPrecisionError(HRLatentError, ValueError):
    pass


class SingularLatentBlockError(HRLatentError, ValueError):
    pass


class ConstructionFailedError(HRLatentError, RuntimeError):
    """Rejection or retry budget exhausted while building a model or graph."""


class IngestionError(HRLatentError, ValueError):
    """Malformed or non-finite input data."""


class InsufficientExceedancesError(HRLatentError, ValueError):
    pass


class NotAttainableError(HRLatentError, ValueError):
    """The surrogate likelihood is unbounded for the given variogram."""


class DivergenceError(HRLatentError, RuntimeError):
    pass


class InfeasibleRefitError(HRLatentError, ValueError):
    pass


class NoValidModelError(HRLatentError, ValueError):
    pass


class ConfigError(HRLatentError, ValueError):
    pass
