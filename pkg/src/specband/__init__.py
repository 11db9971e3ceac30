"""Numerical laboratory for 1D discrete Schrödinger operators ``h = -Δ + v`` on the half-line.

Transfer matrices, Floquet band structure of periodized samples, and the
three conductance functionals (transfer-matrix integral, Landauer-Büttiker
and Thouless) whose joint vanishing characterizes the absence of
absolutely continuous spectrum.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BandEdgeError,
    InvalidBracketError,
    InvalidInputError,
    InvalidIntegrandError,
    NearSingularError,
    NumericalFailureError,
    RefusedPreconditionError,
    SpecbandError,
)
from .numerics import Interval  # noqa: E402
from .potential import PotentialSpec, catalog, sample  # noqa: E402

__all__ = [
    "__version__",
    "Interval",
    "PotentialSpec",
    "catalog",
    "sample",
    "SpecbandError",
    "InvalidInputError",
    "InvalidBracketError",
    "InvalidIntegrandError",
    "NumericalFailureError",
    "NearSingularError",
    "BandEdgeError",
    "RefusedPreconditionError",
]
