"""Exception types shared across the harness."""


class ForgetBenchError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(ForgetBenchError):
    """A spec, config file, or argument combination is invalid."""


class ShapeError(ForgetBenchError):
    """Array dimensions do not line up."""


class FormatError(ForgetBenchError):
    """Malformed IDX input; the message names the failing byte offset."""


class StreamExhaustedError(ForgetBenchError):
    """A phase stream ran out of eligible examples mid-run."""


class NumericalInstabilityError(ForgetBenchError):
    """Non-finite values appeared during an update.

    `context` carries whatever the raiser knew (array name, step counter);
    callers closer to the run add testbed/seed information.
    """

    def __init__(self, message, context=None):
        super().__init__(message)
        self.context = dict(context or {})


class NonTerminatingPolicyError(ForgetBenchError):
    """A rollout exceeded the episode step cap."""
