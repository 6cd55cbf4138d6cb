"""Exception hierarchy shared by all modules."""


class NoiseFieldError(Exception):
    """Base class for errors raised by noisefield."""


class DomainError(NoiseFieldError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class TimeRangeError(NoiseFieldError, ValueError):
    """A time point lies outside a trajectory's domain."""


class ResolutionError(NoiseFieldError):
    """A time grid is too coarse to resolve the coherence phase."""


class SingularityError(NoiseFieldError):
    """A synthesized field or derivative is not finite."""

    def __init__(self, message, t=None, path_id=None):
        super().__init__(message)
        self.t = t
        self.path_id = path_id


class LoadError(NoiseFieldError):
    """A trajectory file could not be parsed or failed validation."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class UsageError(NoiseFieldError):
    """Inconsistent arguments, e.g. estimates on mismatched grids."""


class InvalidRowError(LoadError):
    """A trajectory row parsed but is not a valid density matrix."""
