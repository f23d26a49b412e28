"""Exception hierarchy.

Every error raised on bad input derives from ``ValueError`` so that callers
who do not care about the distinction can catch one thing.  The CLI maps
:class:`DataIntegrityError` to exit code 2 and every other package error to
exit code 3.
"""


class WitnessError(ValueError):
    """Base class for all package errors."""


class InvalidModelError(WitnessError):
    """A witness decomposition, POVM or state violates its invariants."""


class InvalidDecompositionError(InvalidModelError):
    pass


class InvalidOutcomeError(InvalidModelError):
    pass


class DegenerateScoreError(InvalidModelError):
    """The score function is constant, so Delta s = 0."""


class NonInvertibleReadoutError(InvalidModelError):
    """Readout fidelities with u + v <= 1 cannot be calibrated."""


class InconsistentModelError(InvalidModelError):
    """c - s_min < -gamma, which no valid witness can produce."""


class DomainError(WitnessError):
    """A numeric argument lies outside the domain of a function."""


class DataIntegrityError(WitnessError):
    """Recorded data contradicts the model it claims to come from."""


class RunLoadError(DataIntegrityError):
    """A run-record file is malformed or fails verification."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SourceError(WitnessError):
    """A state source cannot produce the requested states."""


class PartialRunError(SourceError):
    """A source failed mid-run; the rounds played so far are discarded."""

    def __init__(self, message: str, rounds_completed: int):
        self.rounds_completed = rounds_completed
        super().__init__(f"run aborted after {rounds_completed} rounds: {message}")
