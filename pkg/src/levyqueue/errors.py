"""Exception hierarchy shared by all modules."""


class LevyQueueError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(LevyQueueError, ValueError):
    """A model or cost parameter is outside its admissible range."""


class NormalizationError(ParameterError):
    """Jump distribution does not have unit mean."""


class MomentError(ParameterError):
    """A moment required by the analytics is infinite."""


class StabilityError(LevyQueueError, ValueError):
    """Server speed does not exceed the arrival rate (mu <= lambda)."""


class DomainError(LevyQueueError, ValueError):
    """Transform argument outside the region where it is finite."""


class UnsupportedAnalyticsError(LevyQueueError, ValueError):
    """Initial state has no closed-form moments (e.g. warm-up start)."""


class ConfigError(LevyQueueError, ValueError):
    """Simulation or experiment configuration is invalid."""


class NumericError(LevyQueueError, RuntimeError):
    """A numerical routine failed to converge."""


class ConvexityError(LevyQueueError, RuntimeError):
    """SAA objective violated pathwise convexity beyond tolerance."""
