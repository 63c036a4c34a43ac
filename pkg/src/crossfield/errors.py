"""Exception hierarchy shared by all modules."""


class CrossfieldError(Exception):
    """Base class for every error raised by the package."""


class DomainError(CrossfieldError, ValueError):
    """An input lies outside the domain where an operation is defined."""


class ResourceError(CrossfieldError):
    """A request would exceed the sampling budget (too fine a resolution)."""


class RegularityError(CrossfieldError):
    """No time in the candidate grid moves every sampled point far enough."""


class PreconditionError(CrossfieldError):
    """A stage precondition failed.  ``stage`` names the failing stage."""

    def __init__(self, message, stage=None):
        super().__init__(message if stage is None else f"[{stage}] {message}")
        self.stage = stage


class ConfigError(CrossfieldError):
    """A scenario configuration could not be parsed or validated."""
