"""Exception hierarchy shared across the package."""


class RingAccError(Exception):
    pass


class ConfigError(RingAccError):
    """Invalid configuration; maps to CLI exit code 2."""


class ContractViolation(RingAccError):
    """A documented precondition or invariant was violated by the caller."""


class TransportError(RingAccError):
    pass


class DeadlockError(TransportError):
    """A wait did not complete within the harness timeout; maps to CLI exit code 4."""

    def __init__(self, message, rank=None, lane=None, step=None):
        super().__init__(message)
        self.rank = rank
        self.lane = lane
        self.step = step


class UndefinedNormError(RingAccError):
    """Error metric requested against an all-zero reference tensor."""


class FitError(RingAccError):
    """Degenerate input to the least-squares fit."""
