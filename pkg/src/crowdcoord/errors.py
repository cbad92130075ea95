"""Exception types shared across the package."""


class CrowdCoordError(Exception):
    """Base class for all package errors."""


class InvalidInput(CrowdCoordError):
    """An argument violates an operation's precondition."""


class InvalidMatrix(InvalidInput):
    """Decision matrix contains non-positive or non-finite entries."""


class DegenerateMatrix(InvalidInput):
    """Decision matrix has too few alternatives for the requested method."""


class NoWorkers(CrowdCoordError):
    """A dispatch decision was requested with no candidate workers."""


class StaleState(CrowdCoordError):
    """Checkpointed cursor regressed relative to the recovered chain."""


class EmptyChain(CrowdCoordError):
    """Operation requires a non-empty checkpoint chain."""


class CorruptChain(CrowdCoordError):
    """Checkpoint chain failed structural or checksum validation."""


class InvalidJob(CrowdCoordError):
    """Job specification is internally inconsistent."""


class JobNotFinished(CrowdCoordError):
    """Aggregation requested before every task completed."""


class ProtocolError(CrowdCoordError):
    """Malformed or unexpected wire message."""


class FrameError(ProtocolError):
    """Byte stream does not contain a well-formed frame."""


class UndefinedFairness(CrowdCoordError):
    """Fairness index is undefined for an all-zero allocation."""


class ConfigError(CrowdCoordError):
    """Scenario configuration failed validation."""
