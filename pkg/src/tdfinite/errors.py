"""Exception hierarchy shared by every module."""


class TDFiniteError(Exception):
    """Base class for all library errors."""


class NotErgodic(TDFiniteError):
    """The transition matrix is reducible or periodic."""


class SolveFailure(TDFiniteError):
    """A linear solve broke down numerically."""


class DegenerateFeatures(TDFiniteError):
    """The feature covariance is (numerically) singular."""


class NoConvergence(TDFiniteError):
    """An iteration exceeded its certified iteration budget."""


class ConfigError(TDFiniteError):
    """Invalid or inconsistent configuration.

    ``field`` names the offending entry when one can be identified.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field is not None and field not in message:
            message = f"{field}: {message}"
        super().__init__(message)


class GenerationFailure(TDFiniteError):
    """Random instance generation gave up after too many rejections."""
