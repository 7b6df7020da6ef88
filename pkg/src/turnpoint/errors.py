"""Exception types shared across the package."""


class TurnpointError(Exception):
    """Base class for all turnpoint errors."""


class InvalidDistribution(TurnpointError):
    """A token distribution violates its invariants (non-finite logit, duplicate token, empty)."""


class InvalidTemperature(TurnpointError):
    """Temperature is non-positive or above the configured maximum."""


class InvalidArgument(TurnpointError, ValueError):
    """An argument is outside its documented domain."""


class MissingTemperatureData(TurnpointError):
    """A grid temperature has no records backing it."""

    def __init__(self, temperature: float):
        self.temperature = temperature
        super().__init__(f"no records at grid temperature {temperature}")


class CurveTooShort(TurnpointError):
    """Turning-point detection needs at least three curve points."""


class NoTurningPoint(TurnpointError):
    """No negative-to-positive second-difference transition was found."""

    def __init__(self, message: str = "no turning point found", diagnostics=None):
        self.diagnostics = diagnostics
        super().__init__(message)


class EmptySampleSet(TurnpointError):
    """Aggregation was asked to vote over zero samples."""


class MissingReward(TurnpointError):
    """Best-of-N requires a score on every sample."""


class SampleSizeTooLarge(TurnpointError):
    """A requested subsample exceeds the available samples."""


class EmptyInput(TurnpointError):
    """An operation received an empty collection where data is required."""


class PairedInputMismatch(TurnpointError):
    """Paired lists have different lengths."""


class DegenerateVariance(TurnpointError):
    """Correlation of a constant sequence is undefined."""


class RejectedDuplicate(TurnpointError):
    """Duplicate (problem_id, temperature, sample_index) key."""


class FetchFailed(TurnpointError):
    """All retries against the completions endpoint failed."""
