"""Exception types shared across the package."""


class LqrError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(LqrError):
    """An operand's shape does not match the problem dimensions."""


class UnstableRolloutError(LqrError):
    """A rollout produced a non-finite or overflow-guarded state."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DareConvergenceError(LqrError):
    """The Riccati fixed-point iteration did not reach tolerance."""

    def __init__(self, message, residual=None, gamma=None):
        super().__init__(message)
        self.residual = residual
        self.gamma = gamma


class RepresentationError(LqrError):
    """The requested linear gain is not representable in the policy class."""


class DivergenceError(LqrError):
    """Policy-gradient iteration diverged (cost exceeded the guard)."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


class ConfigError(LqrError):
    """A CLI/experiment configuration is malformed."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
