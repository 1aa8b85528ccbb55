"""Exception hierarchy shared by all modules."""


class HybridObsError(Exception):
    """Base class for every error raised by the package."""


class InputError(HybridObsError, ValueError):
    """Malformed or inconsistent user input (shapes, non-finite values, ...)."""


class PlacementError(HybridObsError):
    """A spectral target could not be reached by gain placement.

    ``eigenvalue`` carries the offending eigenvalue when one is known.
    """

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class InfeasibleError(HybridObsError):
    """A matrix equation has no solution with the requested properties."""


class ConsistencyError(HybridObsError):
    """An internal invariant that theory guarantees was found violated.

    ``check`` names the failed check.
    """

    def __init__(self, message, check=None):
        super().__init__(message)
        self.check = check


class DivergenceError(HybridObsError):
    """Simulation produced a non-finite state."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time
