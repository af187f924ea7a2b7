"""Exception types shared across the package."""


class MdtError(Exception):
    """Base class for all package errors."""


class ConfigError(MdtError):
    """Bad or unknown configuration content."""


class ShapeMismatch(MdtError):
    """A vector or matrix component has an unexpected length."""


class NonFiniteInput(MdtError):
    """An input contained NaN or infinity where finite values are required."""


class DegenerateShape(MdtError):
    """Too few agents or treatments for a concordance statistic."""


class AgentFailure(MdtError):
    """An agent produced an invalid opinion (or no opinion at all).

    `code` is machine-readable: one of "timeout", "schema_violation",
    "range_violation", "invalid_opinion".
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class EpisodeDone(MdtError):
    """step() was called on an environment whose episode already ended."""


class InsufficientSamples(MdtError):
    """Replay buffer holds fewer transitions than the requested batch."""


class LayoutMismatch(MdtError):
    """A policy's state layout does not match the environment's."""
