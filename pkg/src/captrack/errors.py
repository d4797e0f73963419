"""Exception types shared across the package."""


class CaptrackError(Exception):
    """Base class for all captrack errors."""


class DegeneracyError(CaptrackError, ValueError):
    """Input is geometrically degenerate for the requested operation."""


class NonPositiveScaleError(DegeneracyError):
    """A fitted scale came out non-positive, i.e. the rotation is grossly wrong."""


class NoConsensusError(CaptrackError):
    """RANSAC found no model with enough inliers."""


class LostTrackError(CaptrackError):
    """The tracked object left the cropping region."""


class ConfigError(CaptrackError, ValueError):
    """An experiment configuration is invalid."""
