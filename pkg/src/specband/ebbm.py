"""Two-terminal electronic black box: a finite sample between free leads.

The sample ``h_L = -Δ + v`` on ``{1..L}`` (Dirichlet ends) is coupled with
strength ``κ`` at site 1 to a left lead and at site ``L`` to a right lead,
each a free half-line with Dirichlet boundary.  Integrating the leads out
gives the effective sample matrix

    M(E) = h_L - E - κ² Σ_l(E) P_1 - κ² Σ_r(E) P_L,

where ``Σ`` is the lead Green's function at its boundary site, taken on the
real axis from above (``E + i0``).  The Landauer-Büttiker transmission
density is ``2π κ⁴ |M^{-1}_{1L}|² ν'_l(E) ν'_r(E)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidInputError, NearSingularError, NumericalFailureError
from .floquet import BandStructure, band_edges
from .numerics import Interval, integrate, tridiag_solve_complex
from .potential import sample
from .transfer import default_panels, resonance_points

__all__ = [
    "ReservoirSpec",
    "LBPoint",
    "FREE_LEADS",
    "LEAD_BAND",
    "lead_self_energy",
    "coupled_green_1L",
    "lb_density",
    "lb_density_values",
    "lb_current",
    "lb_conductance",
    "transparency_check",
    "crystalline_lb_density",
    "crystalline_lb_current",
    "UnitarityMonitor",
    "UNITARITY",
]

LEAD_BAND = Interval(-2.0, 2.0)
DENSITY_CEIL = 1.0 / (2.0 * math.pi)
UNITARITY_TOL_LO = 1e-12
UNITARITY_TOL_HI = 1e-9


@dataclass(frozen=True)
class ReservoirSpec:
    """A free half-line lead coupled through its boundary site."""

    kind: str = "free_lead"
    side: str = "left"

    def __post_init__(self):
        if self.kind != "free_lead":
            raise InvalidInputError(f"unsupported reservoir kind {self.kind!r}")
        if self.side not in ("left", "right"):
            raise InvalidInputError(f"reservoir side must be 'left' or 'right', got {self.side!r}")

    @property
    def support(self) -> Interval:
        """Essential support of the absolutely continuous lead spectrum."""
        return LEAD_BAND

    def spectral_density(self, E):
        """``ν'(E) = sqrt(4 - E^2) / (2π)`` on (-2, 2), zero outside."""
        E = np.asarray(E, dtype=float)
        out = np.sqrt(np.maximum(4.0 - E * E, 0.0)) / (2.0 * math.pi)
        return float(out) if out.ndim == 0 else out


FREE_LEADS = (ReservoirSpec(side="left"), ReservoirSpec(side="right"))


@dataclass(frozen=True)
class LBPoint:
    """Transmission data at one energy."""

    E: float
    green_1L: complex
    density: float


class UnitarityMonitor:
    """Running record of every transmission density evaluated in this process.

    Any value outside ``[-1e-12, 1/(2π) + 1e-9]`` raises immediately; the
    record lets callers report how many samples the bound was checked on.
    """

    def __init__(self):
        self.reset()

    def reset(self):
        self.count = 0
        self.minimum = math.inf
        self.maximum = -math.inf

    def observe(self, density: np.ndarray):
        d = np.asarray(density, dtype=float)
        if d.size == 0:
            return
        lo, hi = float(d.min()), float(d.max())
        if lo < -UNITARITY_TOL_LO or hi > DENSITY_CEIL + UNITARITY_TOL_HI or not np.all(np.isfinite(d)):
            raise NumericalFailureError(
                f"transmission density outside [0, 1/(2π)]: min={lo!r}, max={hi!r}"
            )
        self.count += d.size
        self.minimum = min(self.minimum, lo)
        self.maximum = max(self.maximum, hi)

    def as_dict(self) -> dict:
        return {"count": self.count, "min": self.minimum, "max": self.maximum}


UNITARITY = UnitarityMonitor()


def lead_self_energy(res: ReservoirSpec, E):
    """Boundary Green's function ``<δ_1, (h_lead - E - i0)^{-1} δ_1>`` of a free lead.

    ``(-E + i sqrt(4 - E^2)) / 2`` inside the band; outside, the real root
    of ``Σ² + EΣ + 1 = 0`` with ``|Σ| <= 1``.
    """
    if not isinstance(res, ReservoirSpec):
        raise InvalidInputError("expected a ReservoirSpec")
    E = np.asarray(E, dtype=float)
    inside = np.abs(E) < 2.0
    root_in = np.sqrt(np.maximum(4.0 - E * E, 0.0))
    root_out = np.sqrt(np.maximum(E * E - 4.0, 0.0))
    out = np.where(inside, (-E + 1j * root_in) / 2.0, (-E + np.sign(E) * root_out) / 2.0 + 0j)
    return complex(out) if out.ndim == 0 else out


def _reservoirs(reservoirs) -> tuple:
    if reservoirs is None:
        return FREE_LEADS
    left, right = reservoirs
    return left, right


CHUNK_ENTRIES = 2_000_000


def _green_vals(vals, kappa, E, reservoirs=None):
    left, right = _reservoirs(reservoirs)
    E = np.atleast_1d(np.asarray(E, dtype=float))
    L = vals.size
    k2 = kappa * kappa
    out = np.empty(E.size, dtype=complex)
    step = max(1, CHUNK_ENTRIES // L)
    for i in range(0, E.size, step):
        Ec = E[i : i + step]
        diag = np.broadcast_to(vals, (Ec.size, L)) - Ec[:, None] + 0j
        diag[:, 0] -= k2 * lead_self_energy(left, Ec)
        diag[:, L - 1] -= k2 * lead_self_energy(right, Ec)
        rhs = np.zeros((Ec.size, L), dtype=complex)
        rhs[:, L - 1] = 1.0
        out[i : i + step] = tridiag_solve_complex(diag, -np.ones(L - 1), rhs)[:, 0]
    return out


def _check_kappa(kappa) -> float:
    kappa = float(kappa)
    if kappa == 0.0 or not math.isfinite(kappa):
        raise InvalidInputError("coupling kappa must be a finite non-zero number")
    return kappa


def coupled_green_1L(v, L: int, kappa: float, E, reservoirs=None):
    """``<δ_1, (h_{κ,L} - E - i0)^{-1} δ_L>`` through the effective sample matrix.

    Raises NearSingularError when ``E`` sits on a resonance of the sample with
    real self-energies (possible only outside the lead band).
    """
    kappa = _check_kappa(kappa)
    vals = sample(v, int(L))
    out = _green_vals(vals, kappa, E, reservoirs)
    return complex(out[0]) if np.ndim(E) == 0 else out


def _density_vals(vals, kappa, E, reservoirs=None):
    left, right = _reservoirs(reservoirs)
    E = np.atleast_1d(np.asarray(E, dtype=float))
    dens = np.zeros(E.shape)
    inside = (np.abs(E) < 2.0)
    if np.any(inside):
        Ei = E[inside]
        g = _green_vals(vals, kappa, Ei, reservoirs)
        d = 2.0 * math.pi * kappa**4 * np.abs(g) ** 2 * left.spectral_density(Ei) * right.spectral_density(Ei)
        dens[inside] = d
    UNITARITY.observe(dens)
    return np.maximum(dens, 0.0)


def lb_density_values(v, L: int, kappa: float, E, reservoirs=None) -> np.ndarray:
    """Vectorized transmission density ``D_LB(L, E)``."""
    kappa = _check_kappa(kappa)
    return _density_vals(sample(v, int(L)), kappa, E, reservoirs)


def lb_density(v, L: int, kappa: float, reservoirs=None, E: float = 0.0) -> LBPoint:
    """Transmission density at one energy, with the Green's function element.

    Outside the lead band the density is 0 and ``green_1L`` is reported when
    the (real) effective matrix is invertible, NaN otherwise.
    """
    kappa = _check_kappa(kappa)
    vals = sample(v, int(L))
    E = float(E)
    try:
        g = complex(_green_vals(vals, kappa, E, reservoirs)[0])
    except NearSingularError:
        if abs(E) < 2.0:
            raise
        g = complex(math.nan, math.nan)
    d = float(_density_vals(vals, kappa, E, reservoirs)[0])
    return LBPoint(E, g, d)


def lb_current(v, L: int, kappa: float, reservoirs, mu_l: float, mu_r: float, tol: float = 1e-8) -> float:
    """``J = ∫_{μ_l}^{μ_r} D_LB(L, E) dE``, integrated only over the lead band."""
    kappa = _check_kappa(kappa)
    I = Interval(mu_l, mu_r)
    lo, hi = max(I.lo, LEAD_BAND.lo), min(I.hi, LEAD_BAND.hi)
    if hi <= lo:
        return 0.0
    vals = sample(v, int(L))
    panels = default_panels(vals.size, hi - lo)
    J = integrate(
        lambda E: _density_vals(vals, kappa, E, reservoirs),
        Interval(lo, hi),
        tol=tol,
        initial_panels=panels,
        points=resonance_points(vals, lo, hi, (hi - lo) / panels, floor=1e-3 * tol),
    )
    return min(max(J, 0.0), I.width * DENSITY_CEIL + UNITARITY_TOL_HI)


def lb_conductance(v, L: int, kappa: float, reservoirs, mu_l: float, mu_r: float, tol: float = 1e-8) -> float:
    """``G_LB = J / (μ_r - μ_l)``, in ``[0, 1/(2π)]``."""
    I = Interval(mu_l, mu_r)
    return lb_current(v, L, kappa, reservoirs, I.lo, I.hi, tol) / I.width


def transparency_check(reservoirs, mu_l: float, mu_r: float) -> bool:
    """True iff the window lies strictly inside both leads' ac support.

    Windows touching a band edge are rejected: the lead density vanishes
    there.
    """
    I = Interval(mu_l, mu_r)
    for res in _reservoirs(reservoirs):
        s = res.support
        if not (s.lo < I.lo and I.hi < s.hi):
            return False
    return True


def crystalline_lb_density(v, L: int, E, bands: Optional[BandStructure] = None):
    """``1/(2π)`` on the spectrum of the periodized sample, 0 elsewhere."""
    bs = bands if bands is not None else band_edges(v, L, full=False)
    out = np.where(bs.contains(E), DENSITY_CEIL, 0.0)
    return float(out) if out.ndim == 0 else out


def crystalline_lb_current(v, L: int, mu_l: float, mu_r: float, bands: Optional[BandStructure] = None) -> float:
    """Exact integral of :func:`crystalline_lb_density`: ``|sp ∩ (μ_l, μ_r)| / (2π)``."""
    bs = bands if bands is not None else band_edges(v, L, full=False)
    return bs.measure(Interval(mu_l, mu_r)) * DENSITY_CEIL
