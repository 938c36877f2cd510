"""Exception hierarchy shared across the package."""


class BwKError(Exception):
    """Base class for every error raised by pdbwk."""


class StructuralError(BwKError, ValueError):
    """Inconsistent dimensions or malformed inputs."""


class ValidationError(BwKError, ValueError):
    """A value lies outside its admissible range."""


class RejectedInputError(BwKError, ValueError):
    """An operation was called outside its precondition."""


class SolverFailure(BwKError, RuntimeError):
    """The simplex iteration cap was exceeded."""


class ContractViolation(BwKError, RuntimeError):
    """A stateful object was used in a state that forbids the call."""


class GenerationFailure(BwKError, RuntimeError):
    """Random instance generation gave up after too many rejections."""

    def __init__(self, message, warnings=()):
        super().__init__(message)
        self.warnings = list(warnings)
