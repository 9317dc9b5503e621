"""Exception and warning types shared across the package."""


class WormholeError(Exception):
    """Base class for all package errors."""


class InvalidArgument(WormholeError, ValueError):
    pass


class FormMismatch(WormholeError, ValueError):
    pass


class GridMismatch(WormholeError, ValueError):
    pass


class IntegrationFailure(WormholeError, RuntimeError):
    def __init__(self, message, exit_x=None):
        super().__init__(message)
        self.exit_x = exit_x


class BracketFailure(WormholeError, RuntimeError):
    pass


class TailTooShort(WormholeError, RuntimeError):
    def __init__(self, message, drift=None):
        super().__init__(message)
        self.drift = drift


class RejectedStep(WormholeError, ValueError):
    pass


class BlowupError(WormholeError, FloatingPointError):
    """Non-finite values appeared during an evolution.

    ``last_good`` holds the most recent finite state.
    """

    def __init__(self, message, last_good=None, time=None):
        super().__init__(message)
        self.last_good = last_good
        self.time = time


class DomainError(WormholeError, ValueError):
    pass


class DomainTooSmall(WormholeError, ValueError):
    pass


class EmptyWindowWarning(UserWarning):
    pass


class DecayWarning(UserWarning):
    pass


class ConditioningWarning(UserWarning):
    pass
