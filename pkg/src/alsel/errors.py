"""Exception hierarchy shared across the engine.

``exit_code`` is what the CLI returns when the error escapes a command:
1 input/contract error, 2 infeasible configuration, 3 integrity failure.
"""


class AlselError(Exception):
    exit_code = 1


class FormatError(AlselError):
    """Malformed input file or record; message names the offending line."""


class InfeasibleError(AlselError):
    """Requested sizes/counts cannot be satisfied by the data."""

    exit_code = 2


class IntegrityError(AlselError):
    """Checksum mismatch or a corrupt/incomplete experiment store."""

    exit_code = 3


class StateError(AlselError):
    """Operation not valid in the current experiment state."""


class LockError(AlselError):
    """Experiment directory already has a writer."""


class ScoringError(AlselError):
    """A scoring batch failed after retries; carries the batch index."""

    def __init__(self, message: str, batch_index: int | None = None):
        super().__init__(message)
        self.batch_index = batch_index


class ProtocolError(ScoringError):
    """Gateway request/response violated the wire protocol."""
