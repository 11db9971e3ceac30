"""Transfer matrices ``T(L, E) = A(L) ... A(1)`` with ``A(n) = [[v(n)-E, -1], [1, 0]]``.

``T(L, E)`` maps ``(u(1), u(0))`` to ``(u(L+1), u(L))`` for any solution of
``-u(n+1) - u(n-1) + v(n) u(n) = E u(n)``, so its columns are the Dirichlet
and Neumann solutions.  Products are accumulated in scaled form: every few steps
(few enough that nothing can overflow in between) a power of two is pulled
out of each matrix whose Frobenius norm left [1/2, 2].  This keeps energies
deep inside spectral gaps representable for any length.

All functions accept either a :class:`~specband.potential.PotentialSpec` or
a plain array of site values for ``v``, and scalar or array energies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidInputError
from .numerics import Interval, ScaledMatrix, integrate
from .potential import sample

__all__ = [
    "TransferResult",
    "transfer_product",
    "transfer_matrix",
    "inv_norm_sq",
    "inv_norm_integral",
    "carmona_density",
    "dirichlet_neumann_solutions",
    "GaussianBump",
    "weak_convergence_probe",
    "lyapunov_estimate",
    "default_panels",
    "resonance_points",
    "carmona_points",
    "carmona_resolution",
]

_LN2 = math.log(2.0)
NORM_LOG_CLAMP = 350.0


@dataclass(frozen=True)
class TransferResult:
    """``T(L, E)`` together with ``ln ||T||`` and the finite-``L`` Lyapunov estimate."""

    matrix: ScaledMatrix
    norm_log: np.ndarray
    lyapunov_estimate: np.ndarray
    L: int


def _check_L(L) -> int:
    if int(L) != L or L < 1:
        raise InvalidInputError(f"sample length L must be a positive integer, got {L!r}")
    return int(L)


def transfer_product(vals: np.ndarray, E, factor=None):
    """Raw scaled product over the site values ``vals``.

    Returns ``(m, k, log_det, det_sign)``: ``m`` has shape ``E.shape + (2, 2)``,
    the full product is ``m * 2**k`` and ``det_sign * exp(log_det)`` is the
    determinant of ``m`` tracked through the factors.  ``factor(x)`` may replace the one-step
    matrix (it receives ``x = v(n) - E`` and must return the four entries);
    it exists for fault-injection tests of the determinant invariant.
    """
    E = np.asarray(E, dtype=float)
    shape = E.shape
    a = np.ones(shape)
    b = np.zeros(shape)
    c = np.zeros(shape)
    d = np.ones(shape)
    k = np.zeros(shape, dtype=np.int64)
    log_det = np.zeros(shape)
    det_sign = np.ones(shape)
    stride = _renorm_stride(vals, E) if factor is None else 1
    for n, vn in enumerate(vals, 1):
        x = vn - E
        if factor is None:
            a, b, c, d = x * a - c, x * b - d, a, b
        else:
            f11, f12, f21, f22 = factor(x)
            a, b, c, d = f11 * a + f12 * c, f11 * b + f12 * d, f21 * a + f22 * c, f21 * b + f22 * d
            fdet = f11 * f22 - f12 * f21
            log_det = log_det + np.log(np.abs(fdet))
            det_sign = det_sign * np.sign(fdet)
        if n % stride == 0 or n == len(vals):
            a, b, c, d, k, log_det = _rescale((a, b, c, d), k, log_det)
    m = np.stack([np.stack([a, b], axis=-1), np.stack([c, d], axis=-1)], axis=-2)
    return m, k, log_det, det_sign


def _renorm_stride(vals, E) -> int:
    """Steps between renormalizations that cannot overflow or underflow.

    Each factor has norm at most ``|v - E| + 2``, and ``T`` has determinant
    one, so over ``s`` steps the entries stay within ``(|v - E| + 2)**s`` of
    unit scale; keep that below 2**400.
    """
    if np.size(E) == 0 or len(vals) == 0:
        return 1
    xmax = float(np.max(np.abs(vals))) + float(np.max(np.abs(E)))
    return int(min(16, max(1, 400.0 / math.log2(xmax + 2.0))))


def _rescale(entries, k, log_det):
    """Pull a power of two out of every matrix whose Frobenius norm left [1/2, 2]."""
    a, b, c, d = entries
    fro2 = a * a + b * b + c * c + d * d
    out = (fro2 > 4.0) | (fro2 < 0.25)
    if not np.any(out):
        return (a, b, c, d, k, log_det)
    _, e = np.frexp(np.where(fro2 > 0, fro2, 1.0))
    shift = np.where(out, np.floor_divide(e, 2), 0).astype(np.int64)
    entries = tuple(np.ldexp(z, -shift) for z in entries)
    return (*entries, k + shift, log_det - 2.0 * _LN2 * shift)


def _norm_log(m, k, log_det):
    fro2 = np.einsum("...ij,...ij->...", m, m)
    det_m = np.exp(log_det)
    disc = np.maximum(fro2 * fro2 - 4.0 * det_m * det_m, 0.0)
    return k * _LN2 + 0.5 * np.log(0.5 * (fro2 + np.sqrt(disc)))


def transfer_matrix(v, L: int, E, factor=None) -> TransferResult:
    """Transfer matrix of ``h = -Δ + v`` between sites 1 and ``L`` at energy ``E``."""
    L = _check_L(L)
    vals = sample(v, L)
    m, k, log_det, det_sign = transfer_product(vals, E, factor=factor)
    sm = ScaledMatrix(m, k * _LN2, log_det, det_sign)
    nl = _norm_log(m, k, log_det)
    return TransferResult(sm, nl, nl / L, L)


def _inv_norm_sq_vals(vals, E):
    m, k, log_det, _ = transfer_product(vals, E)
    nl = _norm_log(m, k, log_det)
    return np.where(nl > NORM_LOG_CLAMP, 0.0, np.exp(-2.0 * np.minimum(nl, NORM_LOG_CLAMP)))


def inv_norm_sq(v, L: int, E):
    """``||T(L, E)||^-2`` in (0, 1]; exactly 0 once ``ln||T|| > 350``."""
    L = _check_L(L)
    out = _inv_norm_sq_vals(sample(v, L), E)
    return float(out) if np.ndim(out) == 0 else out


def default_panels(L: int, width: float) -> int:
    """Initial panel count so that each panel sees O(1) oscillations of ``T``."""
    return max(8, int(math.ceil(L * width / 4.0)))


def _dirichlet_modes(vals: np.ndarray, lo: float, hi: float):
    """Eigenvalues of the sample in ``(lo, hi)`` with ``φ_j(1)^2`` and ``φ_j(L)^2``."""
    L = vals.size
    if L < 2:
        lam = vals[(vals > lo) & (vals < hi)]
        return lam, np.ones(lam.size), np.ones(lam.size)
    # the MRRR driver on the full problem is far faster than inverse iteration on a window
    lam, phi = scipy.linalg.eigh_tridiagonal(vals, -np.ones(L - 1), lapack_driver="stemr")
    sel = (lam > lo) & (lam < hi)
    return lam[sel], phi[0, sel] ** 2, phi[-1, sel] ** 2


def _graded(lam, width, keep, lo, hi, panel, grading):
    out = [lam]
    for lj, wj in zip(lam[keep], width[keep]):
        steps = wj * np.exp2(np.arange(-grading, 64))
        steps = steps[steps < panel]
        out.extend([lj - steps, lj + steps])
    pts = np.concatenate(out)
    return np.unique(pts[(pts > lo) & (pts < hi)])


def resonance_points(vals: np.ndarray, lo: float, hi: float, panel: float, floor: float = 1e-14, grading: int = 3) -> np.ndarray:
    """Quadrature breakpoints graded towards the narrow transmission resonances in ``(lo, hi)``.

    Both ``||T||^-2`` and the transmission density peak close to the
    Dirichlet eigenvalues ``λ_j`` of the sample, with a width of order
    ``w_j = φ_j(1)^2 + φ_j(L)^2`` and a weight no larger than that.  For
    every ``λ_j`` whose peak is narrow compared with the base ``panel``
    size the returned points are ``λ_j ± w_j 2^(i - grading)``, doubling
    out to ``panel``.  Peaks with ``w_j < floor`` are skipped: they carry
    less than ``floor`` of the integral.
    """
    if hi <= lo:
        return np.zeros(0)
    lam, first, last = _dirichlet_modes(vals, lo, hi)
    w = first + last
    return _graded(lam, w, (w >= floor) & (w <= 0.01 * panel), lo, hi, panel, grading)


UNRESOLVABLE_WIDTH = 1e-12


def carmona_points(vals: np.ndarray, f, lo: float, hi: float, panel: float, floor: float = 1e-14, grading: int = 3):
    """Breakpoints for ``f`` times the Carmona density and the weight it cannot resolve.

    Near a Dirichlet eigenvalue ``λ_j`` the density is a Lorentzian of
    weight ``φ_j(1)^2`` and half-width ``φ_j(L)^2``, so the peak contributes
    about ``f(λ_j) φ_j(1)^2``.  Peaks with relative half-width below
    ``1e-12`` cannot be sampled in double precision (the decaying Dirichlet
    solution is swamped by rounding).  Returns ``(points, unresolved)``
    with ``unresolved`` the summed contribution of those peaks.
    """
    if hi <= lo:
        return np.zeros(0), 0.0
    lam, first, last = _dirichlet_modes(vals, lo, hi)
    contrib = np.abs(f(lam)) * first
    narrow = last / (1.0 + np.abs(lam)) < UNRESOLVABLE_WIDTH
    unresolved = math.fsum(contrib[narrow])
    keep = (contrib >= floor) & ~narrow & (last <= 0.01 * panel)
    return _graded(lam, last, keep, lo, hi, panel, grading), unresolved


def inv_norm_integral(v, L: int, I, tol: float = 1e-8, full_output: bool = False):
    """``∫_I ||T(L, E)||^-2 dE``, the transfer-matrix side of the conductance equivalence."""
    L = _check_L(L)
    I = I if isinstance(I, Interval) else Interval(*I)
    vals = sample(v, L)
    panels = default_panels(L, I.width)
    return integrate(
        lambda E: _inv_norm_sq_vals(vals, E),
        I,
        tol=tol,
        initial_panels=panels,
        full_output=full_output,
        points=resonance_points(vals, I.lo, I.hi, I.width / panels, floor=1e-3 * tol),
    )


def _carmona_vals(vals, E):
    m, k, _, _ = transfer_product(vals, E)
    col2 = m[..., 0, 0] ** 2 + m[..., 1, 0] ** 2
    expo = -2.0 * _LN2 * k - np.log(col2)
    return np.exp(np.minimum(expo, 700.0)) / math.pi


def carmona_density(v, L: int, E):
    """``(1/π) ||T(L, E) (1, 0)^T||^-2``, whose weak limit is the Dirichlet spectral measure."""
    L = _check_L(L)
    out = _carmona_vals(sample(v, L), E)
    return float(out) if np.ndim(out) == 0 else out


def dirichlet_neumann_solutions(v, L: int, E: float):
    """Direct three-term recursion for ``u_D`` and ``u_N`` on sites ``0..L+1``.

    Unscaled and only stable while the solutions stay representable; used
    as an independent check of :func:`transfer_matrix`.
    """
    L = _check_L(L)
    vals = sample(v, L)
    uD = np.zeros(L + 2)
    uN = np.zeros(L + 2)
    uD[1], uD[0] = 1.0, 0.0
    uN[1], uN[0] = 0.0, 1.0
    for n in range(1, L + 1):
        uD[n + 1] = (vals[n - 1] - E) * uD[n] - uD[n - 1]
        uN[n + 1] = (vals[n - 1] - E) * uN[n] - uN[n - 1]
    return uD, uN


def lyapunov_estimate(v, L: int, E):
    """``(1/L) ln ||T(L, E)||``."""
    return transfer_matrix(v, L, E).lyapunov_estimate


@dataclass(frozen=True)
class GaussianBump:
    """Test function ``amplitude * exp(-(E - center)^2 / (2 width^2))``.

    Treated as supported on ``center ± 6 width``.
    """

    center: float = 0.0
    width: float = 0.5
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise InvalidInputError("bump width must be positive")

    def __call__(self, E):
        E = np.asarray(E, dtype=float)
        return self.amplitude * np.exp(-0.5 * ((E - self.center) / self.width) ** 2)

    @property
    def support(self) -> Interval:
        return Interval(self.center - 6.0 * self.width, self.center + 6.0 * self.width)


def weak_convergence_probe(v, f: GaussianBump, L_seq: Sequence[int], tol: float = 1e-7) -> list[float]:
    """``∫ f(E) carmona_density(L, E) dE`` over the bump support, one value per ``L``.

    Panels are graded towards the Dirichlet eigenvalues where the density
    has its narrow peaks; see :func:`carmona_resolution` for when those
    peaks are too narrow for double precision.
    """
    out = []
    support = f.support
    for L in L_seq:
        L = _check_L(L)
        if f.amplitude == 0.0:
            out.append(0.0)
            continue
        vals = sample(v, L)
        panels = default_panels(L, support.width)
        pts, _ = carmona_points(vals, f, support.lo, support.hi, support.width / panels, floor=1e-3 * tol)
        out.append(
            integrate(
                lambda E: f(E) * _carmona_vals(vals, E),
                support,
                tol=tol,
                initial_panels=panels,
                points=pts,
            )
        )
    return out


def carmona_resolution(v, f: GaussianBump, L: int, tol: float = 1e-7) -> float:
    """Part of ``∫ f dμ_L`` carried by peaks too narrow for double precision.

    See :func:`carmona_points`; the probe cannot be trusted to better than
    this amount.
    """
    L = _check_L(L)
    vals = sample(v, L)
    s = f.support
    return carmona_points(vals, f, s.lo, s.hi, s.width / default_panels(L, s.width), floor=1e-3 * tol)[1]
