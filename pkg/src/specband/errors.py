"""Exception hierarchy shared by all specband modules."""


class SpecbandError(Exception):
    """Base class for every error raised by specband."""


class InvalidInputError(SpecbandError, ValueError):
    """An argument violates the documented precondition of an operation."""


class InvalidBracketError(InvalidInputError):
    """Root-finding bracket whose endpoint values have the same sign."""


class InvalidIntegrandError(InvalidInputError):
    """The integrand produced a non-finite sample."""


class NumericalFailureError(SpecbandError, ArithmeticError):
    """An algorithm failed to converge or lost internal consistency."""


class NearSingularError(NumericalFailureError):
    """A tridiagonal pivot fell below the breakdown threshold.

    For the coupled sample this only happens at (or extremely close to) a
    resonance of the decoupled sample with real self-energies.
    """


class BandEdgeError(InvalidInputError):
    """Energy too close to a band edge for a Bloch-wave construction."""


class RefusedPreconditionError(SpecbandError):
    """A run was refused because a physical precondition does not hold."""
