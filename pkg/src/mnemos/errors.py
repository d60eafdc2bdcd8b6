"""Exception types shared across the engine."""


class MnemosError(Exception):
    """Base class for all engine errors."""


class ContractViolation(MnemosError, ValueError):
    """An operation was called outside its preconditions (bad dimension, bad state)."""


class BackendError(MnemosError, RuntimeError):
    """An external embedder or chat backend failed.

    The transport-level exception is kept on ``cause`` (and chained as
    ``__cause__`` when raised with ``from``).
    """

    def __init__(self, message, cause=None):
        super().__init__(message)
        self.cause = cause


class SlotNotFound(MnemosError, KeyError):
    """No memory slot with the requested id."""
