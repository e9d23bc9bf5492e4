"""Exception hierarchy shared by the library and mapped to CLI exit codes."""


class JamgameError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InvalidInputError(JamgameError, ValueError):
    """Malformed channel, distribution, or parameter."""

    exit_code = 2


class CapExceededError(JamgameError):
    """An enumeration or convolution size limit was hit."""

    exit_code = 3


class SolverError(JamgameError):
    """A numerical solver failed or did not converge."""

    exit_code = 4


class ConvergenceError(SolverError):
    """An iterative solver exhausted its iteration budget."""
