"""Exception hierarchy shared across the package."""


class HRSFError(Exception):
    """Base class for all errors raised by hrsf."""


class ConfigurationError(HRSFError):
    """Inconsistent or malformed configuration (dimension mismatch, missing entries)."""


class InvalidDepthError(HRSFError, ValueError):
    """A depth value that cannot be deprojected (zero or negative)."""


class NoValidDepthError(HRSFError):
    """No pixel in the requested region passed the depth validity window."""


class IncompleteCycleError(HRSFError):
    """The robot never left its initial position or never returned to it."""


class SimulationTimeout(HRSFError):
    """A scenario did not complete within its configured simulated-time limit."""
