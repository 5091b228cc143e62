"""Exception hierarchy shared by all quorumsync modules."""


class QuorumSyncError(Exception):
    """Base class for every error raised by this package."""


class InputError(QuorumSyncError, ValueError):
    """Malformed or inconsistent input (bad shapes, non-finite entries, ...)."""


class UnsupportedError(QuorumSyncError, NotImplementedError):
    """A request that is well-formed but deliberately not supported."""


class DomainError(QuorumSyncError, ArithmeticError):
    """A vector field or Jacobian evaluated to a non-finite value."""


class AssemblyError(QuorumSyncError, ValueError):
    """A network declaration cannot be assembled."""


class InvariantError(QuorumSyncError, ValueError):
    """A structural invariant (e.g. diagonal coupling Jacobian) is violated."""


class DivergenceError(QuorumSyncError, ArithmeticError):
    """Integration blew up; ``last_time`` is the last time with a valid state."""

    def __init__(self, message: str, last_time: float):
        super().__init__(f"{message} (last valid t={last_time:.6g})")
        self.last_time = last_time
